//! Logarithmic selection of report steps: dense early, sparse late.

use crate::{Error, Result};

/// Targets `0, (n-1)^(k/(s-2))` for `k = 0..s-1`, rounded, then laid down
/// gap by gap: each gap is at least the previous one (so gaps never shrink)
/// and small enough that the remaining gaps can still reach `n - 1`.
pub fn log_time_sample(n_total: usize, n_select: usize) -> Result<Vec<usize>> {
    if n_select < 2 || n_select > n_total {
        return Err(Error::InvalidCounts(format!(
            "need 2 <= n_select <= n_total, got n_select={n_select}, n_total={n_total}"
        )));
    }
    let last = n_total - 1;
    if n_select == 2 {
        return Ok(vec![0, last]);
    }
    let mut out = Vec::with_capacity(n_select);
    out.push(0);
    let (mut pos, mut prev) = (0usize, 1usize);
    let e = (n_select - 2) as f64;
    for i in 1..n_select {
        let left = n_select - i;
        let room = last - pos;
        let g = if left == 1 {
            room
        } else {
            let target = (last as f64).powf((i - 1) as f64 / e).round() as usize;
            target.saturating_sub(pos).max(prev).min(room / left)
        };
        pos += g;
        prev = g;
        out.push(pos);
    }
    Ok(out)
}
