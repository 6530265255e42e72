use kld_filter::synth::{generate_scan, paper_layout};

fn noise_only(rows: usize, seed: u64) -> Vec<f64> {
    let mut cfg = paper_layout().noise_only();
    cfg.seed = seed;
    cfg.pipe.axial_length = rows as f64;
    generate_scan(&cfg).unwrap().into_values()
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn noise_sigma_matches_snr() {
    let target = 100.0 * 10f64.powf(-2.5);
    for seed in [1, 2, 3] {
        let v = noise_only(500, seed);
        assert_eq!(v.len(), 500 * 360);
        let (mean, sd) = moments(&v);
        assert!((sd / target - 1.0).abs() <= 0.02, "seed {seed}: sigma {sd} vs {target}");
        assert!((mean - 100.0).abs() <= 0.01, "seed {seed}: mean {mean}");
    }
}

#[test]
fn readings_sit_on_the_resolution_lattice() {
    for v in noise_only(20, 4) {
        let steps = v / 0.1;
        assert!((steps - steps.round()).abs() < 1e-6, "{v}");
    }
}

#[test]
fn infinite_snr_gives_nominal_readings() {
    let mut cfg = paper_layout().noise_only();
    cfg.sensor.snr_db = f64::INFINITY;
    cfg.pipe.axial_length = 5.0;
    assert!(generate_scan(&cfg).unwrap().values().iter().all(|&v| v == 100.0));
}
