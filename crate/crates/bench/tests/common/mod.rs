#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Cardinalities of 22 categorical attributes, one-hot encoded into 112 columns.
const CARDINALITIES: [usize; 22] = [6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 2];

fn unit(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// LibSVM text shaped like the mushrooms set: binary one-hot rows with 22
/// active features out of 112 and labels in {1, 2} from a noisy linear rule.
pub fn mushrooms_like(rows: usize, seed: u64) -> String {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let weights: Vec<f64> = (0..112).map(|_| 2.0 * unit(&mut rng) - 1.0).collect();
    let mut text = String::new();
    for _ in 0..rows {
        let mut offset = 0;
        let mut idx = Vec::with_capacity(22);
        for &c in &CARDINALITIES {
            idx.push(offset + (unit(&mut rng) * c as f64) as usize);
            offset += c;
        }
        let score: f64 = idx.iter().map(|&i| weights[i]).sum::<f64>() + 0.5 * (unit(&mut rng) - 0.5);
        let _ = write!(text, "{}", if score > 0.0 { 1 } else { 2 });
        for i in idx {
            let _ = write!(text, " {}:1", i + 1);
        }
        text.push('\n');
    }
    text
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Rows of a CSV file, header first.
pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}
