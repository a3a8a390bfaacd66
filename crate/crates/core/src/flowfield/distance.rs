//! Exact Euclidean distance transform (lower envelope of parabolas, one
//! pass per axis). Squared distances are integers and the envelope
//! breakpoints are compared as exact rationals, so the result matches a
//! brute-force search bit for bit.

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Breakpoint `num / den` with `den > 0`; `None` is minus infinity.
type Breakpoint = Option<(i128, i128)>;

/// Squared distance transform of a sampled function along one line.
/// `f[i] = None` means +infinity (not a site).
fn envelope_1d(f: &[Option<i64>], out: &mut [Option<i64>], sites: &mut Vec<usize>, bounds: &mut Vec<Breakpoint>) {
    sites.clear();
    bounds.clear();
    for (q, fq) in f.iter().enumerate() {
        let Some(fq) = *fq else { continue };
        loop {
            let Some(&p) = sites.last() else {
                sites.push(q);
                bounds.push(None);
                break;
            };
            let fp = f[p].expect("sites are finite");
            let (q_, p_) = (q as i128, p as i128);
            // Intersection of the parabolas rooted at p and q.
            let num = (fq as i128 + q_ * q_) - (fp as i128 + p_ * p_);
            let den = 2 * (q_ - p_);
            let dominated = match bounds.last().copied().flatten() {
                Some((zn, zd)) => num * zd <= zn * den,
                None => false,
            };
            if dominated {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(Some((num, den)));
                break;
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = None);
        return;
    }
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        let x_ = x as i128;
        while k + 1 < sites.len() {
            let (zn, zd) = bounds[k + 1].expect("only the first breakpoint is unbounded");
            if zn < x_ * zd {
                k += 1;
            } else {
                break;
            }
        }
        let v = sites[k] as i64;
        let d = x as i64 - v;
        *o = Some(d * d + f[sites[k]].expect("sites are finite"));
    }
}

/// Distance in pixels from each pixel to the nearest pixel with value >= 0.5.
pub fn edge_distance(binary: &ImageGrid) -> Result<ImageGrid> {
    let (w, h) = (binary.width(), binary.height());
    let mut grid: Vec<Option<i64>> = (0..w * h)
        .map(|i| (binary.data()[i * binary.channels()] >= 0.5).then_some(0))
        .collect();
    if grid.iter().all(Option::is_none) {
        return Err(Error::NoGuidanceLines);
    }
    let mut sites = Vec::new();
    let mut bounds = Vec::new();

    let mut col = vec![None; h];
    let mut col_out = vec![None; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        envelope_1d(&col, &mut col_out, &mut sites, &mut bounds);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![None; w];
    let mut out = ImageGrid::new(w, h, 1);
    for y in 0..h {
        envelope_1d(&grid[y * w..(y + 1) * w], &mut row_out, &mut sites, &mut bounds);
        for (x, d) in row_out.iter().enumerate() {
            let d2 = d.expect("at least one edge pixel exists");
            out.set(x, y, 0, (d2 as f64).sqrt());
        }
    }
    Ok(out)
}
