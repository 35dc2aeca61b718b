use nvspin::analysis::{fft_spectrum, init_guess_rabi, Window};
use nvspin::dynamics::{rabi_average_population, DriveParams};
use nvspin::measurement::{sample_trace, ReadoutModel, TraceMeta};

#[test]
fn rabi_guess_survives_heavy_shot_noise() {
    let drive = DriveParams { f0: 6.2, ..Default::default() };
    let x: Vec<f64> = (0..141).map(|i| i as f64 * 0.025).collect();
    let pops: Vec<f64> = x.iter().map(|&t| rabi_average_population(t, &drive, 2.0)).collect();
    // About 200 photons per point.
    let readout = ReadoutModel { cycles: 10_000, ..Default::default() };
    let mut hits = 0;
    for seed in 0..100 {
        let trace = sample_trace(&x, &pops, &readout, seed, TraceMeta::default()).unwrap();
        let resolution = fft_spectrum(&trace, Window::Hann, 1).unwrap().resolution;
        let guess = init_guess_rabi(&trace);
        if !guess.fallback && (guess.params[0] - drive.f0).abs() <= resolution {
            hits += 1;
        }
    }
    assert!(hits >= 90, "{hits}/100");
}
