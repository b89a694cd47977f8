use paircalib::epipolar::{estimate_f_eightpoint, FundamentalMatrix};
use paircalib::selfcalib::{calibrate_from_f, CalibrateOptions};
use paircalib::synth::{make_scene, SceneConfig};

#[test]
fn scale_invariance_breakdown() {
    let opts = CalibrateOptions::default();
    let mut worst = (0.0f64, 0u64, "");
    for seed in 0..50u64 {
        let mut cfg = SceneConfig::random(seed);
        cfg.n_points = 40;
        let (_, corrs) = make_scene(&cfg).unwrap();
        let f = estimate_f_eightpoint(&corrs).unwrap();
        let base = calibrate_from_f(&f, Some(&corrs), &opts).unwrap();
        let bc = base.chosen_candidate().unwrap();
        for lambda in [1e-3, 1e3] {
            let scaled = FundamentalMatrix::from_matrix(f.matrix() * lambda).unwrap();
            let sol = calibrate_from_f(&scaled, Some(&corrs), &opts).unwrap();
            let c = sol.chosen_candidate().unwrap();
            let checks = [
                ((sol.f1 - base.f1).abs() / base.f1, "f1"),
                ((sol.f2 - base.f2).abs() / base.f2, "f2"),
                ((c.rotation - bc.rotation).norm(), "R"),
                ((c.translation_dir - bc.translation_dir).norm(), "t"),
            ];
            for (v, name) in checks {
                if v > worst.0 {
                    worst = (v, seed, name);
                }
            }
        }
    }
    println!("worst {:.3e} at seed {} component {}", worst.0, worst.1, worst.2);

    // drill into the worst seed: is the input F identical after scaling?
    let mut cfg = SceneConfig::random(worst.1);
    cfg.n_points = 40;
    let (_, corrs) = make_scene(&cfg).unwrap();
    let f = estimate_f_eightpoint(&corrs).unwrap();
    for lambda in [1e-3, 1e3] {
        let scaled = FundamentalMatrix::from_matrix(f.matrix() * lambda).unwrap();
        let dfm = (scaled.matrix() - f.matrix()).norm();
        println!("lambda {lambda:>6}: canonical F diff {dfm:.3e}");
        let base = calibrate_from_f(&f, Some(&corrs), &opts).unwrap();
        let sol = calibrate_from_f(&scaled, Some(&corrs), &opts).unwrap();
        println!(
            "  f1 rel {:.3e}  f2 rel {:.3e}  kappa rel {:.3e}",
            (sol.f1 - base.f1).abs() / base.f1,
            (sol.f2 - base.f2).abs() / base.f2,
            (sol.kappa_epsilon - base.kappa_epsilon).abs() / base.kappa_epsilon
        );
    }
}
