use proptest::prelude::*;
use speckle_pgd::io::{
    decode_pgm, decode_spkl, encode_pgm, encode_spkl, read_run_config, read_trajectory_rows, write_json,
    write_trajectory, RunConfig, Spkl1, TRAJECTORY_COLUMNS,
};
use speckle_pgd::likelihood::InverseMode;
use speckle_pgd::measurement::{generate_looks, make_sensing, Ensemble, SceneImage};
use speckle_pgd::metrics::{psnr, ssim};
use speckle_pgd::pgd::{IterationRecord, Trajectory};
use speckle_pgd::rng::RngSpec;

fn random_image(h: usize, w: usize, seed: u64) -> SceneImage {
    use rand::Rng;
    let mut r = RngSpec::new(seed, 0).rng();
    SceneImage::new(h, w, (0..h * w).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

/// SSIM computed window by window with a 2-D Gaussian, no separability.
fn sliding_window_ssim(a: &SceneImage, b: &SceneImage) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (1e-4, 9e-4);
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    for r in 0..=h - 11 {
        for c in 0..=w - 11 {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wgt = g[i] * g[j] / norm;
                    let (p, q) = (a.get(r + i, c + j), b.get(r + i, c + j));
                    mx += wgt * p;
                    my += wgt * q;
                    xx += wgt * p * p;
                    yy += wgt * q * q;
                    xy += wgt * p * q;
                }
            }
            let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    total / ((h - 10) * (w - 10)) as f64
}

#[test]
fn ssim_matches_sliding_window_oracle() {
    for seed in 0..4 {
        let a = random_image(20, 17, seed);
        let b = random_image(20, 17, seed + 100);
        let blend = SceneImage::new(20, 17, a.pixels().iter().zip(b.pixels()).map(|(p, q)| 0.8 * p + 0.2 * q).collect()).unwrap();
        for other in [&b, &blend] {
            let got = ssim(&a, other).unwrap();
            let want = sliding_window_ssim(&a, other);
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }
}

#[test]
fn psnr_matches_formula() {
    for seed in 0..4 {
        let a = random_image(9, 7, seed);
        let b = random_image(9, 7, seed + 50);
        let mse: f64 = a.pixels().iter().zip(b.pixels()).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 63.0;
        assert!((psnr(&a, &b).unwrap() + 10.0 * mse.log10()).abs() < 1e-10);
    }
}

#[test]
fn spkl_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let img = random_image(4, 4, 1);
    for ens in [Ensemble::GaussianReal, Ensemble::GaussianComplex, Ensemble::HaarRows, Ensemble::HaarRowsReal] {
        let a = make_sensing(8, 16, ens, RngSpec::new(2, 1)).unwrap();
        let looks = generate_looks(&img, &a, 3, 1.0, 0.1, ens.is_real(), RngSpec::new(2, 2)).unwrap();
        let file = Spkl1::new(a, looks).unwrap();
        let path = dir.path().join("m.spkl");
        speckle_pgd::io::write_spkl(&path, &file).unwrap();
        let back = speckle_pgd::io::read_spkl(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(encode_spkl(&back), encode_spkl(&file));
    }
}

#[test]
fn corrupt_spkl_reports_offset() {
    let a = make_sensing(2, 4, Ensemble::GaussianComplex, RngSpec::new(1, 1)).unwrap();
    let looks = generate_looks(&random_image(2, 2, 3), &a, 1, 1.0, 0.0, false, RngSpec::new(1, 2)).unwrap();
    let mut bytes = encode_spkl(&Spkl1::new(a, looks).unwrap());
    bytes[0] = b'X';
    let err = decode_spkl(&bytes).unwrap_err();
    assert_eq!(err.kind(), "corrupt");
}

#[test]
fn trajectory_csv_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let traj = Trajectory {
        records: (1..=3)
            .map(|i| IterationRecord {
                iteration: i,
                inverse_mode: if i == 1 { InverseMode::Exact } else { InverseMode::NsApprox },
                nll: 1.0 / i as f64,
                dx_inf: 0.01 * i as f64,
                psnr: Some(20.0 + i as f64),
                ssim: None,
                seconds: 0.5,
            })
            .collect(),
        ns_fallbacks: 0,
    };
    let path = dir.path().join("t.csv");
    write_trajectory(&path, &traj, false).unwrap();
    let rows = read_trajectory_rows(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_COLUMNS.join(","));
    assert_eq!(rows[1], ["2", "ns-approx", "0.5", "0.02", "22", "", ""]);
    assert_eq!(rows.len(), 3);
}

#[test]
fn run_config_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.checkpoint_every = Some(5);
    cfg.pgd.iterations = 7;
    let cfg = cfg.resolved(256, 4).unwrap();
    let path = dir.path().join("c.json");
    write_json(&path, &cfg).unwrap();
    let back = read_run_config(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!((back.height, back.width), (Some(16), Some(16)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pgm_round_trip_within_quantization(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let img = random_image(h, w, seed);
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        prop_assert_eq!((back.height(), back.width()), (h, w));
        for (p, q) in img.pixels().iter().zip(back.pixels()) {
            prop_assert!((p - q).abs() <= 0.5 / 65535.0 + 1e-15);
        }
        prop_assert_eq!(encode_pgm(&back), encode_pgm(&img));
    }
}
