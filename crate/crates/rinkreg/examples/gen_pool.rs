//! Regenerates the frozen camera pool data file.
//!
//! Run from the crate root: `cargo run --example gen_pool`.

use rinkreg::camera::{generate_pool, CameraModel, POOL_SEED, POOL_SIZE};

fn main() {
    let pool = generate_pool(&CameraModel::default(), POOL_SEED, POOL_SIZE);
    let json = serde_json::to_string_pretty(&pool).unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/camera_pool.json");
    std::fs::write(path, json).unwrap();
    println!("wrote {POOL_SIZE} homographies to {path}");
}
