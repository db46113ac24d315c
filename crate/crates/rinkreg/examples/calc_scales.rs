//! Prints the empirical standard deviation of each free homography entry
//! over 10,000 ground-truth draws (pool + default augmentation). Used once
//! to freeze `DEFAULT_H_SCALES`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rinkreg::camera::default_pool;
use rinkreg::synth::{augment_homography, child_seed, HAugmentConfig};

fn main() {
    let pool = default_pool().unwrap();
    let cfg = HAugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let n = 10_000usize;
    let mut sums = [0.0f64; 8];
    let mut sq = [0.0f64; 8];
    for i in 0..n {
        let base = &pool[rng.gen_range(0..pool.len())];
        let h = augment_homography(base, &cfg, child_seed(1234, i as u64)).unwrap();
        let e = h.entries();
        for k in 0..8 {
            sums[k] += e[k];
            sq[k] += e[k] * e[k];
        }
    }
    for k in 0..8 {
        let mean = sums[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        println!("s[{k}] = {:.10}", var.sqrt());
    }
}
