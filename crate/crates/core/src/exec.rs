//! Execution policy for independent work items (search chains, benchmark
//! cells, candidate scoring). With the `parallel` feature disabled every
//! policy runs sequentially; results are identical either way because each
//! item owns its RNG and outputs are collected in index order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` only when rayon is compiled in.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..len).map(f)` under the given policy, results in index order.
pub fn map_indexed<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => (0..len).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..len).into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Mutable counterpart of [`map_indexed`] over a slice.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t))
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Named sub-seed derivation (splitmix64 over seed, label and index), so every
/// chain and split draws from its own stream regardless of scheduling.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for b in label.bytes() {
        h = splitmix(h ^ b as u64);
    }
    splitmix(h ^ splitmix(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
