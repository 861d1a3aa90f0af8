//! Unscrambled Sobol points (Joe–Kuo direction numbers, gray-code order).

use crate::error::{Error, Result};

const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2..=8; dimension 1 is van der Corput.
const DIRECTIONS: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

pub const MAX_DIM: usize = DIRECTIONS.len() + 1;

#[derive(Clone, Debug)]
pub struct Sobol {
    v: Vec<[u32; BITS]>,
    x: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "sobol dimension {dim} not in 1..={MAX_DIM}"
            )));
        }
        let mut v = vec![[0u32; BITS]; dim];
        for (k, vk) in v[0].iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        for (d, &(s, a, m)) in DIRECTIONS.iter().take(dim - 1).enumerate() {
            let s = s as usize;
            let row = &mut v[d + 1];
            for k in 0..BITS {
                row[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut r = row[k - s] ^ (row[k - s] >> s);
                    for l in 1..s {
                        if (a >> (s - 1 - l)) & 1 == 1 {
                            r ^= row[k - l];
                        }
                    }
                    r
                };
            }
        }
        Ok(Self {
            v,
            x: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Next point in `[0, 1)^dim`; the first point is the origin.
    pub fn next_point(&mut self) -> Vec<f64> {
        let p = self
            .x
            .iter()
            .map(|&x| x as f64 / 2f64.powi(BITS as i32))
            .collect();
        let c = (!self.index).trailing_zeros() as usize;
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            *x ^= v[c.min(BITS - 1)];
        }
        self.index += 1;
        p
    }
}

/// `n` Sobol points mapped onto the box `bounds`, followed by its `2^d` corners.
pub fn sample_box(bounds: &[(f64, f64)], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut s = Sobol::new(bounds.len())?;
    let map = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(bounds)
            .map(|(&t, &(lo, hi))| lo + t * (hi - lo))
            .collect()
    };
    let mut pts: Vec<Vec<f64>> = (0..n).map(|_| map(&s.next_point())).collect();
    for c in 0..1usize << bounds.len() {
        pts.push(
            bounds
                .iter()
                .enumerate()
                .map(|(j, &(lo, hi))| if (c >> j) & 1 == 1 { hi } else { lo })
                .collect(),
        );
    }
    Ok(pts)
}
