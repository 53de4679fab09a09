use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::{Embedding, PathTable};
use crate::tensor::DenseTensor;

/// How order-2 maps are grouped before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Contiguous runs of `L(J-1)/2` maps in canonical path order.
    #[default]
    ConsecutiveBlocks,
    /// All maps that share the first-layer filter `(j1, k1)`.
    ParentPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FmfConfig {
    pub grouping: Grouping,
}

impl FmfConfig {
    pub fn new(grouping: Grouping) -> Self {
        Self { grouping }
    }

    /// Order-2 channel ranges averaged into each fused channel, relative to
    /// the start of the order-2 block. Always `L·J` ranges.
    pub fn groups(&self, table: &PathTable) -> Result<Vec<std::ops::Range<usize>>> {
        let (j, l) = (table.octaves, table.angles);
        let (_, n1, n2) = table.counts();
        match self.grouping {
            Grouping::ConsecutiveBlocks => {
                let twice = l * (j - 1);
                if twice == 0 || twice % 2 != 0 {
                    return Err(Error::param(format!(
                        "consecutive blocks need L(J-1)/2 to be a positive integer, got {l}*{}/2",
                        j - 1
                    )));
                }
                let size = twice / 2;
                debug_assert_eq!(size * n1, n2);
                Ok((0..n1).map(|g| g * size..(g + 1) * size).collect())
            }
            Grouping::ParentPath => {
                let mut out = Vec::with_capacity(n1);
                let mut start = 0;
                for j1 in 0..j {
                    let size = l * (j - 1 - j1);
                    for _ in 0..l {
                        out.push(start..start + size);
                        start += size;
                    }
                }
                debug_assert_eq!(start, n2);
                Ok(out)
            }
        }
    }
}

/// Feature-map fusion: keeps order-0 and order-1 channels and replaces the
/// order-2 block by `L·J` group means, giving `1 + 2LJ` channels.
///
/// A parent-path group with no children (`j1 = J-1`) fuses to a zero map.
pub fn fmf(e: &Embedding, cfg: &FmfConfig) -> Result<DenseTensor<f64>> {
    let table = &e.path_table;
    let (n, p, h, w) = e.tensor.dims4()?;
    if p != table.len() {
        return Err(Error::shape(format!(
            "embedding has {p} channels but the path table has {}",
            table.len()
        )));
    }
    let groups = cfg.groups(table)?;
    let (_, n1, _) = table.counts();
    let keep = 1 + n1;
    let hw = h * w;
    let out_c = keep + groups.len();
    let mut out = DenseTensor::zeros(vec![n, out_c, h, w]);
    for i in 0..n {
        let src = e.tensor.item(i);
        let dst = out.item_mut(i);
        dst[..keep * hw].copy_from_slice(&src[..keep * hw]);
        for (g, range) in groups.iter().enumerate() {
            if range.is_empty() {
                continue;
            }
            // Running mean, so a group of identical maps fuses to that map
            // bit for bit.
            let o = &mut dst[(keep + g) * hw..(keep + g + 1) * hw];
            for (t, c) in range.clone().enumerate() {
                let s = &src[(keep + c) * hw..(keep + c + 1) * hw];
                let inv = 1.0 / (t + 1) as f64;
                for (a, b) in o.iter_mut().zip(s) {
                    *a += (b - *a) * inv;
                }
            }
        }
    }
    Ok(out)
}
