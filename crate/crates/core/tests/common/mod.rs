#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfp_core::dataset::{Sample, COLS, NUM_CLASSES, PIXELS, ROWS};

/// Ten blob-shaped class prototypes on the 28x28 grid plus uniform noise,
/// clamped non-negative and normalized like real images.
pub fn synthetic(n: usize, noise: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..NUM_CLASSES).map(|c| blob_image(c, &mut rng)).collect();
    (0..n)
        .map(|i| {
            let label = (i % NUM_CLASSES) as u8;
            let x: Vec<f64> = prototypes[label as usize]
                .iter()
                .map(|&v| (v + noise * (rng.gen::<f64>() - 0.5)).max(0.0))
                .collect();
            Sample::new(x, label).expect("non-zero")
        })
        .collect()
}

fn blob_image(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; PIXELS];
    for _ in 0..3 {
        let cy = 6.0 + rng.gen::<f64>() * 16.0;
        let cx = 6.0 + rng.gen::<f64>() * 16.0;
        let r = 2.0 + (class % 4) as f64;
        for row in 0..ROWS {
            for col in 0..COLS {
                let d2 = (row as f64 - cy).powi(2) + (col as f64 - cx).powi(2);
                x[row * COLS + col] += (-d2 / (2.0 * r * r)).exp();
            }
        }
    }
    x
}

/// Random non-negative unit vector.
pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x: Vec<f64> = (0..PIXELS).map(|_| rng.gen::<f64>().powi(3)).collect();
    Sample::new(x, 0).unwrap().x().to_vec()
}

/// Directory with the MNIST files, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("WFP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/mnist"));
    dir.join("t10k-labels-idx1-ubyte").is_file().then_some(dir)
}
