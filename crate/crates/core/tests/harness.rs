use skylink::harness::report::write_triggers_csv;
use skylink::harness::{case1::case1_seeds, run_case1, run_closed_loop, Prepared, RunSpec, Scenario};

fn case1() -> Scenario {
    Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/case1.scenario").as_ref()).unwrap()
}

/// Empty sky, one tower, lossless link and no process noise.
const QUIET: &str = r#"
name = "quiet"
seed = 4
horizon_slots = 237

[environment]
bounds = { min = [0.0, 0.0, 0.0], max = [200.0, 60.0, 40.0] }

[[environment.base_stations]]
id = 0
position = [100.0, 30.0, 30.0]

[radio]
success_override = 1.0

[plant]
q_pos = 0.0
q_vel = 0.0

[scheduler]
r_meas_pos = 1.0e-12
r_meas_vel = 1.0e-12

[case1.stmpc]
kind = "stmpc"
kappa = 3.0
m_safe = 1.0
n_max = 20

[[uav]]
start = [10.0, 30.0, 20.0]
goal = [190.0, 30.0, 20.0]
"#;

#[test]
fn echo_matches_the_golden_file() {
    let golden = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/case1.echo.toml")).unwrap();
    assert_eq!(case1().echo(), golden);
}

#[test]
fn energy_counts_every_transmission() {
    let sc = case1();
    let prep = Prepared::new(&sc, &sc.uavs()).unwrap();
    let out = run_closed_loop(&prep, &RunSpec::from_scenario(&prep)).unwrap();
    let counted: u64 = out.triggers.iter().map(|t| t.transmissions()).sum();
    assert_eq!(counted, out.metrics.transmissions);
    assert_eq!(out.metrics.energy_j, counted as f64 * sc.config.radio.energy_per_packet_j);

    let mut csv = Vec::new();
    write_triggers_csv(&mut csv, &out.triggers).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let from_csv: u64 = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            u64::from(f[3] == "1" || f[3] == "true") + u64::from(f[4] != "0")
        })
        .sum();
    assert_eq!(from_csv, counted);
}

#[test]
fn quiet_sky_saves_all_but_one_packet_in_n_max() {
    let sc = Scenario::parse(QUIET).unwrap();
    let prep = Prepared::new(&sc, &sc.uavs()).unwrap();
    let report = run_case1(&prep, &[1]).unwrap();
    let t = sc.config.horizon_slots.unwrap() as f64;
    let expected = 1.0 - (t / 20.0).ceil() / t;
    let got = report.seeds[0].energy_reduction();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn runs_are_byte_identical() {
    let sc = case1();
    let prep = Prepared::new(&sc, &sc.uavs()).unwrap();
    let csv = || {
        let out = run_closed_loop(&prep, &RunSpec::from_scenario(&prep)).unwrap();
        let mut buf = Vec::new();
        write_triggers_csv(&mut buf, &out.triggers).unwrap();
        skylink::harness::report::write_trace_csv(&mut buf, &out.uavs[0]).unwrap();
        buf
    };
    assert_eq!(csv(), csv());
}

#[test]
fn case1_seeds_follow_the_base() {
    assert_eq!(case1_seeds(5, 3), vec![5, 6, 7]);
}
