//! CSV and text outputs. All floats use fixed precision so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::requirements::ComplianceMetrics;

use super::case1::{challenging_slot, Case1Report};
use super::case2::SweepReport;
use super::sim::{Prepared, RunOutput, TriggerRow, UavRun};

pub const TRACE_HEADER: &str = "slot,x,y,z,vx,vy,vz,ref_x,ref_y,ref_z,err_m,sinr_db,serving_bs,aoi,ux,uy,uz,underrun";
pub const TRIGGER_HEADER: &str = "slot,uav,policy,triggered,packet_len,delivered,buffer_cursor,underrun";
pub const SWEEP_HEADER: &str = "N,M,seed,avg_ctrl_err_m,max_aoi,underruns,grants_total,energy_J";
pub const PLAN_HEADER: &str = "slot,x,y,z,vx,vy,vz,sinr_db,serving_bs";

fn f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_trace_csv<W: Write>(mut w: W, run: &UavRun) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for t in &run.traces {
        let serving = t.serving_bs.map_or_else(|| "-1".to_string(), |s| s.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.slot,
            f(t.position.x),
            f(t.position.y),
            f(t.position.z),
            f(t.velocity.x),
            f(t.velocity.y),
            f(t.velocity.z),
            f(t.ref_position.x),
            f(t.ref_position.y),
            f(t.ref_position.z),
            f(t.error_m),
            f(t.sinr_db),
            serving,
            t.aoi,
            f(t.input.x),
            f(t.input.y),
            f(t.input.z),
            u8::from(t.underrun)
        )?;
    }
    Ok(())
}

pub fn write_triggers_csv<W: Write>(mut w: W, rows: &[TriggerRow]) -> io::Result<()> {
    writeln!(w, "{TRIGGER_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.slot,
            r.uav,
            r.policy,
            u8::from(r.triggered),
            r.packet_len,
            u8::from(r.delivered),
            r.buffer_cursor,
            u8::from(r.underrun)
        )?;
    }
    Ok(())
}

pub fn summary_text(out: &RunOutput) -> String {
    let m = &out.metrics;
    let mut s = String::new();
    let _ = writeln!(s, "policy = {}", out.spec.policy.name());
    let _ = writeln!(s, "seed = {}", m.seed);
    let _ = writeln!(s, "uavs = {}", m.n);
    let _ = writeln!(s, "grants_per_slot = {}", m.m);
    let _ = writeln!(s, "slots = {}", m.slots);
    let _ = writeln!(s, "avg_ctrl_err_m = {}", f(m.avg_ctrl_err_m));
    let _ = writeln!(s, "mean_aoi = {}", f(m.mean_aoi));
    let _ = writeln!(s, "max_aoi = {}", m.max_aoi);
    let _ = writeln!(s, "underruns = {}", m.underruns);
    let _ = writeln!(s, "grants_total = {}", m.grants_total);
    let _ = writeln!(s, "transmissions = {}", m.transmissions);
    let _ = writeln!(s, "deliveries = {}", m.deliveries);
    let _ = writeln!(s, "energy_J = {}", f(m.energy_j));
    let _ = writeln!(s, "handovers = {}", m.handovers);
    for (i, u) in out.uavs.iter().enumerate() {
        let _ = writeln!(
            s,
            "uav{i}: rms_err_m = {} packets = {} underruns = {} handovers = {}",
            f(u.rms_error()),
            u.packets.len(),
            u.underruns,
            u.handovers
        );
    }
    s
}

/// `trace_uav{i}.csv`, `triggers.csv` and `summary.txt` under `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, u) in out.uavs.iter().enumerate() {
        let mut w = create(&dir.join(format!("trace_uav{i}.csv")))?;
        write_trace_csv(&mut w, u)?;
        w.flush()?;
    }
    let mut w = create(&dir.join("triggers.csv"))?;
    write_triggers_csv(&mut w, &out.triggers)?;
    w.flush()?;
    fs::write(dir.join("summary.txt"), summary_text(out))
}

pub fn case1_summary(report: &Case1Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed,energy_periodic_J,energy_stmpc_J,reduction,rms_periodic_m,rms_stmpc_m,median_len_challenging,median_len_elsewhere"
    );
    for r in &report.seeds {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), f);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            f(r.periodic.metrics.energy_j),
            f(r.stmpc.metrics.energy_j),
            f(r.energy_reduction()),
            f(r.periodic.metrics.rms_error_m[0]),
            f(r.stmpc.metrics.rms_error_m[0]),
            opt(r.median_len_challenging),
            opt(r.median_len_elsewhere)
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "mean_energy_reduction = {}", f(report.mean_energy_reduction()));
    let _ = writeln!(s, "mean_rms_periodic_m = {}", f(report.mean_rms_periodic()));
    let _ = writeln!(s, "mean_rms_stmpc_m = {}", f(report.mean_rms_stmpc()));
    let _ = writeln!(s, "adapting_seeds = {}/{}", report.adapting_seeds(), report.seeds.len());
    s
}

/// Case I outputs: summary, packet-length series, and full run files of the
/// first seed for both policies.
pub fn write_case1(dir: &Path, prep: &Prepared, report: &Case1Report) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("case1_summary.csv"), case1_summary(report))?;
    let mut w = create(&dir.join("stmpc_lengths.csv"))?;
    writeln!(w, "seed,issue_slot,packet_len,challenging")?;
    for r in &report.seeds {
        for p in &r.stmpc.uavs[0].packets {
            let hard = challenging_slot(prep, &r.stmpc, p.issue_slot);
            writeln!(w, "{},{},{},{}", r.seed, p.issue_slot, p.len, u8::from(hard))?;
        }
    }
    w.flush()?;
    if let Some(first) = report.seeds.first() {
        write_run(&dir.join("periodic"), &first.periodic)?;
        write_run(&dir.join("stmpc"), &first.stmpc)?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, report: &SweepReport) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in &report.rows {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            m.seed,
            f(m.avg_ctrl_err_m),
            m.max_aoi,
            m.underruns,
            m.grants_total,
            f(m.energy_j)
        )?;
    }
    Ok(())
}

/// Seed-averaged error with one row per N and one column per M.
pub fn sweep_table(report: &SweepReport) -> String {
    let ms = report.ms();
    let mut s = String::from("N");
    for m in &ms {
        let _ = write!(s, "\tM={m}");
    }
    s.push('\n');
    for n in report.ns() {
        let _ = write!(s, "{n}");
        for &m in &ms {
            let _ = write!(s, "\t{}", report.mean_error(n, m).map_or_else(|| "nan".into(), f));
        }
        s.push('\n');
    }
    s
}

pub fn write_case2(dir: &Path, report: &SweepReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("sweep.csv"))?;
    write_sweep_csv(&mut w, report)?;
    w.flush()?;
    fs::write(dir.join("sweep_table.txt"), sweep_table(report))
}

pub fn write_plan_csv<W: Write>(mut w: W, prep: &Prepared, uav: usize) -> io::Result<()> {
    writeln!(w, "{PLAN_HEADER}")?;
    for s in &prep.uavs[uav].reference.samples {
        let sinr = prep.map.sinr_at(&s.position).unwrap_or(f64::NEG_INFINITY);
        let serving = prep.map.serving_at(&s.position).map_or(-1, i64::from);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.slot,
            f(s.position.x),
            f(s.position.y),
            f(s.position.z),
            f(s.velocity.x),
            f(s.velocity.y),
            f(s.velocity.z),
            f(sinr),
            serving
        )?;
    }
    Ok(())
}

/// Aggregate run measurements in profile units.
pub fn compliance_metrics(out: &RunOutput, slot_duration_s: f64) -> ComplianceMetrics {
    let mut m = ComplianceMetrics::default();
    let (mut attempts, mut delivered) = (0u64, 0u64);
    m.min_altitude_m = f64::INFINITY;
    m.max_altitude_m = f64::NEG_INFINITY;
    for u in &out.uavs {
        attempts += u.ul_attempts + u.dl_attempts;
        delivered += u.ul_delivered + u.dl_delivered;
        m.cmd_latency_ms
            .extend(u.cmd_latency_slots.iter().map(|&s| s as f64 * slot_duration_s * 1000.0));
        for t in &u.traces {
            let e = t.position - t.ref_position;
            m.h_error_m.push(e.xy().norm());
            m.v_error_m.push(e.z.abs());
            m.max_speed_kmh = m.max_speed_kmh.max(t.velocity.norm() * 3.6);
            m.min_altitude_m = m.min_altitude_m.min(t.position.z);
            m.max_altitude_m = m.max_altitude_m.max(t.position.z);
        }
    }
    m.delivery_rate = if attempts == 0 { 1.0 } else { delivered as f64 / attempts as f64 };
    if !m.min_altitude_m.is_finite() {
        m.min_altitude_m = 0.0;
        m.max_altitude_m = 0.0;
    }
    m
}
