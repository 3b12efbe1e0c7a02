use proptest::prelude::*;
use skylink::base::{Aabb, SimRng, Vec3};
use skylink::radio::{
    build_radio_map, received_power_dbm, BaseStation, Environment, LinkModel, PathLossModel, RadioMap,
};

fn station(id: u32, rng: &mut SimRng) -> BaseStation {
    BaseStation {
        id,
        position: Vec3::new(rng.uniform() * 60.0, rng.uniform() * 60.0, 5.0 + rng.uniform() * 20.0),
        tx_power_dbm: 30.0 + 15.0 * rng.uniform(),
        tilt_deg: 20.0 * rng.uniform(),
        beamwidth_3db_deg: 10.0 + 30.0 * rng.uniform(),
        max_attenuation_db: 20.0,
    }
}

/// Small seeded city: one or two buildings, two or three stations.
fn environment(seed: u64) -> Environment {
    let mut rng = SimRng::new(seed, 0);
    let mut buildings = Vec::new();
    for _ in 0..1 + (seed % 2) as usize {
        let x = 10.0 + 30.0 * rng.uniform();
        let y = 10.0 + 30.0 * rng.uniform();
        buildings.push(Aabb::new(Vec3::new(x, y, 0.0), Vec3::new(x + 10.0, y + 10.0, 10.0 + 15.0 * rng.uniform())).unwrap());
    }
    let count = 2 + (seed % 2) as u32;
    let mut base_stations = Vec::new();
    while base_stations.len() < count as usize {
        let bs = station(base_stations.len() as u32, &mut rng);
        if !buildings.iter().any(|b| b.contains(&bs.position)) {
            base_stations.push(bs);
        }
    }
    Environment {
        bounds: Aabb::new(Vec3::zeros(), Vec3::new(60.0, 60.0, 30.0)).unwrap(),
        buildings,
        base_stations,
        noise_power_dbm: -95.0,
        grid_resolution: 5.0,
        path_loss: PathLossModel::default(),
    }
}

fn mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

fn free_cells(map: &RadioMap) -> impl Iterator<Item = (usize, Vec3)> + '_ {
    (0..map.grid.len())
        .filter(|&i| !map.in_building[i])
        .map(|i| (i, map.grid.center(map.grid.unlinear(i))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sinr_never_exceeds_snr(seed in 0u64..10_000) {
        let env = environment(seed);
        let map = build_radio_map(&env, 0.0);
        for (i, p) in free_cells(&map) {
            let serving = env.base_stations.iter().find(|b| b.id == map.serving_bs[i]).unwrap();
            let snr = received_power_dbm(serving, &p, &env).unwrap() - env.noise_power_dbm;
            prop_assert!(map.sinr_db[i] <= snr + 1e-9);
        }
    }

    #[test]
    fn map_matches_brute_force(seed in 0u64..10_000) {
        let env = environment(seed);
        let map = build_radio_map(&env, 0.0);
        for (i, p) in free_cells(&map) {
            let powers: Vec<f64> = env.base_stations.iter().map(|b| received_power_dbm(b, &p, &env).unwrap()).collect();
            let best = (0..powers.len()).fold(0, |b, k| if powers[k] > powers[b] { k } else { b });
            let other: f64 = (0..powers.len()).filter(|&k| k != best).map(|k| mw(powers[k])).sum();
            let sinr = powers[best] - 10.0 * (other + mw(env.noise_power_dbm)).log10();
            prop_assert_eq!(map.serving_bs[i], env.base_stations[best].id);
            prop_assert!((map.sinr_db[i] - sinr).abs() < 1e-9);
        }
    }

    #[test]
    fn extra_station_only_helps_cells_it_serves(seed in 0u64..10_000) {
        let env = environment(seed);
        let before = build_radio_map(&env, 0.0);
        let mut rng = SimRng::new(seed, 1);
        let mut more = env.clone();
        let extra = station(99, &mut rng);
        prop_assume!(!more.buildings.iter().any(|b| b.contains(&extra.position)));
        more.base_stations.push(extra);
        let after = build_radio_map(&more, 0.0);
        for (i, _) in free_cells(&before) {
            if after.serving_bs[i] != 99 {
                prop_assert!(after.sinr_db[i] <= before.sinr_db[i] + 1e-12);
            }
        }
    }

    #[test]
    fn success_probability_is_strictly_increasing(
        a in -20.0f64..20.0,
        gap in 1e-3f64..10.0,
        k in 0.1f64..2.0,
    ) {
        let link = LinkModel { gamma_th_db: 0.0, steepness_per_db: k, ..LinkModel::default() };
        prop_assert!(link.success_probability(a) < link.success_probability(a + gap));
    }
}

#[test]
fn success_is_one_half_at_threshold() {
    for gamma in [-7.5, -2.0, 0.0, 3.25] {
        let link = LinkModel {
            gamma_th_db: gamma,
            ..LinkModel::default()
        };
        assert_eq!(link.success_probability(gamma), 0.5);
    }
}

#[test]
fn map_build_is_bit_identical() {
    let env = environment(42);
    let (a, b) = (build_radio_map(&env, 0.0), build_radio_map(&env, 0.0));
    assert!(a.sinr_db.iter().zip(&b.sinr_db).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.serving_bs, b.serving_bs);
    assert_eq!(a.in_building, b.in_building);
}
