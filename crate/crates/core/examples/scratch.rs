use wsindy_core::data::NoiseSpec;
use wsindy_core::harness::{
    metrics, run_discovery, system_spec, DiscoveryParams, FilteringMode, RegressionMode,
};
use wsindy_core::simulate::{simulate, InitialCondition, SimConfig, System};

fn main() {
    let spec = system_spec(System::BurgersNl);
    let sigma_c = (0.01f64 / 3.0).sqrt();
    let nx = 512usize;
    let xs: Vec<f64> = (0..nx).map(|i| -1.0 + 2.0 * i as f64 / nx as f64).collect();
    let pi = std::f64::consts::PI;

    let profiles: Vec<(&str, Vec<f64>)> = vec![
        ("2.5sin ", xs.iter().map(|&x| 2.5 * (pi * x).sin()).collect()),
        ("2.0sin ", xs.iter().map(|&x| 2.0 * (pi * x).sin()).collect()),
        ("3.0sin ", xs.iter().map(|&x| 3.0 * (pi * x).sin()).collect()),
        ("2.5cos2", xs.iter().map(|&x| 2.5 * (2.0 * pi * x).cos()).collect()),
    ];

    for (name, profile) in profiles {
        let mut sim = SimConfig::defaults(System::BurgersNl);
        sim.initial = InitialCondition::Profile(profile);
        let data = match simulate(&sim) {
            Ok(d) => d,
            Err(e) => { println!("{name}: sim failed {e}"); continue; }
        };
        print!("{name}: stdev {:.4} | ", data.stdev_all());

        let mut p = DiscoveryParams::new(spec.library.clone(), spec.support_fraction.clone());
        p.mode = RegressionMode::Grid;
        let o = run_discovery(&data, &p).unwrap();
        let m = metrics(&o.models, &spec.w_true);
        print!("clean exact {} e {:.1e} | ", m.support_exact, m.e_inf);

        for (mode, filtering, label) in [
            (RegressionMode::OneShot, FilteringMode::Off, "raw1s"),
            (RegressionMode::Grid, FilteringMode::Heuristic, "fgrid"),
            (RegressionMode::OneShot, FilteringMode::Heuristic, "f1s"),
        ] {
            let mut exact = 0;
            let trials = 6;
            for t in 0..trials {
                let noisy = data
                    .add_noise(&NoiseSpec::gaussian_absolute(5.0 * sigma_c, 900 + t))
                    .unwrap();
                let mut p2 = DiscoveryParams::new(spec.library.clone(), spec.support_fraction.clone());
                p2.mode = mode;
                p2.filtering = filtering;
                let o2 = run_discovery(&noisy, &p2).unwrap();
                let mm = metrics(&o2.models, &spec.w_true);
                if mm.support_exact { exact += 1; }
            }
            print!("{label} {exact}/{trials} | ");
        }
        println!();
    }
}
