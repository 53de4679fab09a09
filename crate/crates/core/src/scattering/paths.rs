use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scattering path: the sequence of `(scale, angle)` filter indices
/// applied before the final averaging. Order 0 is the empty path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScatterPath {
    pub lambdas: Vec<(usize, usize)>,
}

impl ScatterPath {
    pub fn order(&self) -> usize {
        self.lambdas.len()
    }
}

/// Frequency-decreasing paths up to order 2, in canonical order: the empty
/// path, then order-1 paths by `(j1, k1)`, then order-2 paths by
/// `(j1, k1, j2, k2)` with `j1 < j2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTable {
    pub octaves: usize,
    pub angles: usize,
    paths: Vec<ScatterPath>,
}

impl PathTable {
    pub fn paths(&self) -> &[ScatterPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Number of paths of order 0, 1 and 2.
    pub fn counts(&self) -> (usize, usize, usize) {
        let l = self.angles;
        let j = self.octaves;
        (1, l * j, l * l * j * (j - 1) / 2)
    }

    /// Channel index of the order-1 path `(j, k)`.
    pub fn order1_index(&self, j: usize, k: usize) -> usize {
        1 + j * self.angles + k
    }

    /// First channel of the order-2 block.
    pub fn order2_start(&self) -> usize {
        1 + self.octaves * self.angles
    }
}

pub fn enumerate_paths(octaves: usize, angles: usize) -> Result<PathTable> {
    if octaves < 1 || angles < 1 {
        return Err(Error::param(format!(
            "need J >= 1 and L >= 1, got J={octaves}, L={angles}"
        )));
    }
    let mut paths = vec![ScatterPath { lambdas: vec![] }];
    for j in 0..octaves {
        for k in 0..angles {
            paths.push(ScatterPath {
                lambdas: vec![(j, k)],
            });
        }
    }
    for j1 in 0..octaves {
        for k1 in 0..angles {
            for j2 in j1 + 1..octaves {
                for k2 in 0..angles {
                    paths.push(ScatterPath {
                        lambdas: vec![(j1, k1), (j2, k2)],
                    });
                }
            }
        }
    }
    Ok(PathTable {
        octaves,
        angles,
        paths,
    })
}
