use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureSet, HypercolumnMap, RotatedStyleDictionary};
use crate::flowfield::AngleSetImage;

/// Norms below this make the cosine distance 1 by convention.
const NORM_EPS: f64 = 1e-12;

/// A rendered cell's nearest style vector: `index` into bin `bin` of the
/// dictionary for `region`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Match {
    pub region: u32,
    pub bin: u16,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnfmValue {
    pub value: f64,
    /// Index of the nearest style vector for each rendered vector.
    pub matches: Vec<usize>,
}

/// Loss, gradient and match provenance of the directional loss.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalEval {
    pub value: f64,
    /// Gradient with respect to `HypercolumnMap::data`, same layout.
    pub grad: Vec<f64>,
    pub matches: Vec<Option<Match>>,
    pub empty_bin_fallbacks: usize,
    /// Number of cells that took part (the loss's `N`).
    pub included: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn distance_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na < NORM_EPS || nb < NORM_EPS {
        1.0
    } else {
        1.0 - dot(a, b) / (na * nb)
    }
}

/// `1 - a.b / (|a| |b|)`; 1 when either vector is (numerically) zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    distance_with_norms(a, norm(a), b, norm(b))
}

/// Nearest vector of `set` by cosine distance; ties go to the lowest index.
fn nearest(q: &[f64], qn: f64, set: &FeatureSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..set.len() {
        let d = distance_with_norms(q, qn, set.vector(j), set.norm(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Mean over `fr` of the cosine distance to the nearest vector of `fs`.
pub fn nnfm_basic(fr: &FeatureSet, fs: &FeatureSet) -> Result<NnfmValue> {
    if fs.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if fr.dim() != fs.dim() {
        return Err(Error::InvalidInput(format!(
            "rendered vectors have length {}, style vectors {}",
            fr.dim(),
            fs.dim()
        )));
    }
    let found: Vec<(usize, f64)> = (0..fr.len())
        .into_par_iter()
        .map(|i| nearest(fr.vector(i), fr.norm(i), fs))
        .collect();
    let n = found.len();
    let sum: f64 = found.iter().map(|f| f.1).sum();
    Ok(NnfmValue {
        value: if n == 0 { 0.0 } else { sum / n as f64 },
        matches: found.into_iter().map(|f| f.0).collect(),
    })
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        n += 1;
    }
    if n > 0 {
        m.iter_mut().for_each(|a| *a /= n as f64);
    }
    m
}

fn centered(set: &FeatureSet, means: &[f64]) -> Result<FeatureSet> {
    let mut out = FeatureSet::new(set.dim());
    let mut c = vec![0.0; set.dim()];
    for j in 0..set.len() {
        c.iter_mut()
            .zip(set.vector(j).iter().zip(means))
            .for_each(|(o, (x, m))| *o = x - m);
        out.push(&c)?;
    }
    Ok(out)
}

/// Basic loss over mean-centered concatenated vectors. The rendered means
/// are recomputed from `rendered`; the style side is centered with
/// `style_means`.
pub fn nnfm_hypercolumn(rendered: &FeatureSet, style: &FeatureSet, style_means: &[f64]) -> Result<NnfmValue> {
    if rendered.dim() != style.dim() || style_means.len() != style.dim() {
        return Err(Error::InvalidInput("hypercolumn lengths differ".into()));
    }
    let mu_r = mean_of((0..rendered.len()).map(|i| rendered.vector(i)), rendered.dim());
    nnfm_basic(&centered(rendered, &mu_r)?, &centered(style, style_means)?)
}

/// Nearest non-empty bin by circular distance, lower index on ties.
fn fallback_bin(dict: &RotatedStyleDictionary, bin: usize) -> Option<usize> {
    let n = dict.bin_count();
    (1..=n / 2).find_map(|k| {
        let lo = (bin + n - k) % n;
        let hi = (bin + k) % n;
        let lo_ok = !dict.bins[lo].is_empty();
        let hi_ok = !dict.bins[hi].is_empty();
        match (lo_ok, hi_ok) {
            (true, true) => Some(lo.min(hi)),
            (true, false) => Some(lo),
            (false, true) => Some(hi),
            (false, false) => None,
        }
    })
}

/// Validated routing of every cell: `(dict index, region)` or `None` when
/// the cell is excluded.
struct Routing {
    cells: Vec<Option<(usize, u16)>>,
    region_means: Vec<Vec<f64>>,
    region_counts: Vec<usize>,
    included: usize,
}

fn route(
    fr: &HypercolumnMap,
    angles: &AngleSetImage,
    regions: Option<&[u32]>,
    dicts: &[RotatedStyleDictionary],
) -> Result<Routing> {
    if (angles.width(), angles.height()) != (fr.width, fr.height) {
        return Err(Error::InvalidInput(format!(
            "angle grid {}x{} differs from feature grid {}x{}",
            angles.width(),
            angles.height(),
            fr.width,
            fr.height
        )));
    }
    if dicts.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let dim = fr.dim();
    for d in dicts {
        if d.dim() != dim {
            return Err(Error::InvalidInput(format!(
                "dictionary vectors have length {}, rendered {dim}",
                d.dim()
            )));
        }
        if d.bin_count() != angles.bin_count() {
            return Err(Error::InvalidInput(format!(
                "dictionary has {} bins, angle grid {}",
                d.bin_count(),
                angles.bin_count()
            )));
        }
    }
    if let Some(r) = regions {
        if r.len() != fr.cell_count() {
            return Err(Error::InvalidInput("region map size differs from feature grid".into()));
        }
    } else if dicts.len() > 1 {
        return Err(Error::InvalidInput("several dictionaries need a region map".into()));
    }
    let mut cells = Vec::with_capacity(fr.cell_count());
    for (i, bin) in angles.bins().iter().enumerate() {
        let Some(bin) = *bin else {
            cells.push(None);
            continue;
        };
        let di = match regions {
            None => 0,
            Some(r) => dicts
                .iter()
                .position(|d| d.region == r[i])
                .ok_or_else(|| Error::InvalidInput(format!("no style for region {}", r[i])))?,
        };
        if !dicts[di].is_usable() {
            return Err(Error::EmptyRegion(dicts[di].region));
        }
        cells.push(Some((di, bin)));
    }
    let region_means: Vec<Vec<f64>> = (0..dicts.len())
        .map(|di| {
            mean_of(
                cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| matches!(c, Some((d, _)) if *d == di))
                    .map(|(i, _)| fr.cell(i)),
                dim,
            )
        })
        .collect();
    let mut region_counts = vec![0; dicts.len()];
    for (di, _) in cells.iter().flatten() {
        region_counts[*di] += 1;
    }
    let included = region_counts.iter().sum();
    Ok(Routing {
        cells,
        region_means,
        region_counts,
        included,
    })
}

struct CellResult {
    matched: Match,
    distance: f64,
    fallback: bool,
    /// dD/dc for the centered vector.
    dc: Vec<f64>,
}

/// Directional loss with one dictionary per style region.
///
/// Each included cell (non-`None` angle bin) is centered with its region's
/// mean over included cells, then matched only against the vectors in its
/// own orientation bin of its region's dictionary. An empty bin falls back
/// to the circularly nearest non-empty bin. The loss is the mean distance
/// over all included cells; the gradient treats matches as fixed.
pub fn nnfm_routed(
    fr: &HypercolumnMap,
    angles: &AngleSetImage,
    regions: Option<&[u32]>,
    dicts: &[RotatedStyleDictionary],
) -> Result<DirectionalEval> {
    let routing = route(fr, angles, regions, dicts)?;
    let dim = fr.dim();
    let results: Vec<Option<CellResult>> = routing
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let (di, bin) = (*cell)?;
            let dict = &dicts[di];
            let mean = &routing.region_means[di];
            let c: Vec<f64> = fr.cell(i).iter().zip(mean).map(|(x, m)| x - m).collect();
            let cn = norm(&c);
            let (b, fallback) = if dict.bins[bin as usize].is_empty() {
                (fallback_bin(dict, bin as usize).expect("dictionary is usable"), true)
            } else {
                (bin as usize, false)
            };
            let set = &dict.bins[b];
            let (j, distance) = nearest(&c, cn, set);
            Some(CellResult {
                matched: Match {
                    region: dict.region,
                    bin: b as u16,
                    index: j,
                },
                distance,
                fallback,
                dc: distance_gradient(&c, cn, set.vector(j), set.norm(j)),
            })
        })
        .collect();

    let n = routing.included;
    let sum: f64 = results.iter().flatten().map(|r| r.distance).sum();
    let value = if n == 0 { 0.0 } else { sum / n as f64 };

    // d/dx_k of (1/N) sum_i D(x_i - mean_r) = g_k - (1/N_r) sum_{i in r} g_i
    let mut grad = vec![0.0; fr.data.len()];
    if n > 0 {
        let scale = 1.0 / n as f64;
        let mut region_sums = vec![vec![0.0; dim]; dicts.len()];
        for (r, cell) in results.iter().zip(&routing.cells) {
            if let (Some(r), Some((di, _))) = (r, cell) {
                region_sums[*di].iter_mut().zip(&r.dc).for_each(|(s, g)| *s += g * scale);
            }
        }
        for (i, (r, cell)) in results.iter().zip(&routing.cells).enumerate() {
            if let (Some(r), Some((di, _))) = (r, cell) {
                let nr = routing.region_counts[*di] as f64;
                let out = &mut grad[i * dim..(i + 1) * dim];
                for ((o, g), s) in out.iter_mut().zip(&r.dc).zip(&region_sums[*di]) {
                    *o = g * scale - s / nr;
                }
            }
        }
    }
    Ok(DirectionalEval {
        value,
        grad,
        empty_bin_fallbacks: results.iter().flatten().filter(|r| r.fallback).count(),
        matches: results.into_iter().map(|r| r.map(|r| r.matched)).collect(),
        included: n,
    })
}

/// Gradient of the cosine distance with respect to `c`.
fn distance_gradient(c: &[f64], cn: f64, s: &[f64], sn: f64) -> Vec<f64> {
    if cn < NORM_EPS || sn < NORM_EPS {
        return vec![0.0; c.len()];
    }
    let d = dot(c, s);
    let a = 1.0 / (cn * sn);
    let b = d / (cn * cn * cn * sn);
    c.iter().zip(s).map(|(ci, si)| -si * a + ci * b).collect()
}

/// Single-dictionary directional loss.
pub fn nnfm_directional(fr: &HypercolumnMap, angles: &AngleSetImage, dict: &RotatedStyleDictionary) -> Result<DirectionalEval> {
    nnfm_routed(fr, angles, None, std::slice::from_ref(dict))
}

/// Value of the routed loss with the given matches held fixed (means are
/// still recomputed from `fr`). Used to check gradients away from match
/// switches.
pub fn nnfm_fixed(
    fr: &HypercolumnMap,
    angles: &AngleSetImage,
    regions: Option<&[u32]>,
    dicts: &[RotatedStyleDictionary],
    matches: &[Option<Match>],
) -> Result<f64> {
    let routing = route(fr, angles, regions, dicts)?;
    if matches.len() != routing.cells.len() {
        return Err(Error::InvalidInput("match list size differs from feature grid".into()));
    }
    let mut sum = 0.0;
    for (i, (cell, m)) in routing.cells.iter().zip(matches).enumerate() {
        match (cell, m) {
            (None, None) => {}
            (Some((di, _)), Some(m)) => {
                let dict = &dicts[*di];
                let set = &dict.bins[m.bin as usize];
                let c: Vec<f64> = fr.cell(i).iter().zip(&routing.region_means[*di]).map(|(x, mu)| x - mu).collect();
                sum += distance_with_norms(&c, norm(&c), set.vector(m.index), set.norm(m.index));
            }
            _ => return Err(Error::InvalidInput(format!("match list disagrees with routing at cell {i}"))),
        }
    }
    Ok(if routing.included == 0 { 0.0 } else { sum / routing.included as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FeatureSet {
        FeatureSet::from_vectors(dim, (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())).unwrap()
    }

    fn oracle_basic(fr: &FeatureSet, fs: &FeatureSet) -> f64 {
        let mut sum = 0.0;
        for i in 0..fr.len() {
            let mut best = f64::INFINITY;
            for j in 0..fs.len() {
                let d = cosine_distance(fr.vector(i), fs.vector(j));
                if d < best {
                    best = d;
                }
            }
            sum += best;
        }
        sum / fr.len() as f64
    }

    fn map_from(set: &FeatureSet, width: usize, height: usize, layer_dims: Vec<usize>) -> HypercolumnMap {
        HypercolumnMap {
            width,
            height,
            factor: 1,
            layer_dims,
            data: set.data().to_vec(),
            means: vec![0.0; set.dim()],
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).abs() < 1e-15, true);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 3.0]), 1.0);
        assert!((cosine_distance(&[1.0, -2.0], &[-1.0, 2.0]) - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn basic_examples() {
        let fr = FeatureSet::from_vectors(2, [vec![1.0, 0.0]]).unwrap();
        let fs = FeatureSet::from_vectors(2, [vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let v = nnfm_basic(&fr, &fs).unwrap();
        assert!((v.value - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(v.matches, vec![1]);
        assert_eq!(nnfm_basic(&fs, &fs).unwrap().value.abs() < 1e-15, true);
        assert!(matches!(nnfm_basic(&fr, &FeatureSet::new(2)), Err(Error::EmptyDictionary)));
    }

    #[test]
    fn basic_equals_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fr = random_set(&mut rng, 20, 6);
        let fs = random_set(&mut rng, 30, 6);
        assert_eq!(nnfm_basic(&fr, &fs).unwrap().value, oracle_basic(&fr, &fs));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let fr = FeatureSet::from_vectors(2, [vec![1.0, 0.0]]).unwrap();
        let fs = FeatureSet::from_vectors(2, [vec![0.0, 1.0], vec![2.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(nnfm_basic(&fr, &fs).unwrap().matches, vec![1]);
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fr = random_set(&mut rng, 10, 5);
        let fs = random_set(&mut rng, 12, 5);
        let scaled = FeatureSet::from_vectors(
            5,
            (0..fr.len()).map(|i| {
                let c = rng.gen_range(0.1..10.0);
                fr.vector(i).iter().map(|x| x * c).collect()
            }),
        )
        .unwrap();
        let a = nnfm_basic(&fr, &fs).unwrap();
        let b = nnfm_basic(&scaled, &fs).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert_eq!(a.matches, b.matches);
    }

    #[test]
    fn hypercolumn_centering_removes_layer_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fr = random_set(&mut rng, 15, 4);
        let fs = random_set(&mut rng, 15, 4);
        let mu_s = mean_of((0..fs.len()).map(|j| fs.vector(j)), 4);
        let base = nnfm_hypercolumn(&fr, &fs, &mu_s).unwrap().value;
        let shift = |s: &FeatureSet| {
            FeatureSet::from_vectors(
                4,
                (0..s.len()).map(|j| {
                    let mut v = s.vector(j).to_vec();
                    v[2] += 3.0;
                    v[3] += 3.0;
                    v
                }),
            )
            .unwrap()
        };
        let fs2 = shift(&fs);
        let mu_s2 = mean_of((0..fs2.len()).map(|j| fs2.vector(j)), 4);
        let shifted = nnfm_hypercolumn(&shift(&fr), &fs2, &mu_s2).unwrap().value;
        assert!((base - shifted).abs() < 1e-12);
        assert!(nnfm_hypercolumn(&fs, &fs, &mu_s).unwrap().value.abs() < 1e-12);
    }

    fn three_bin_dict(rng: &mut ChaCha8Rng, dim: usize, sizes: [usize; 3]) -> RotatedStyleDictionary {
        let bins = sizes.iter().map(|&n| random_set(rng, n, dim)).collect();
        RotatedStyleDictionary::new(60.0, vec![dim], vec![0.0; dim], bins, 0).unwrap()
    }

    #[test]
    fn directional_equals_per_bin_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dim = 7;
        let dict = three_bin_dict(&mut rng, dim, [9, 14, 5]);
        let (w, h) = (6, 5);
        let fr = map_from(&random_set(&mut rng, w * h, dim), w, h, vec![dim]);
        let bins: Vec<Option<u16>> = (0..w * h).map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..3)) }).collect();
        let angles = AngleSetImage::new(w, h, 60.0, bins.clone()).unwrap();
        let eval = nnfm_directional(&fr, &angles, &dict).unwrap();

        let included: Vec<usize> = (0..w * h).filter(|&i| bins[i].is_some()).collect();
        let mut mu = vec![0.0; dim];
        for &i in &included {
            mu.iter_mut().zip(fr.cell(i)).for_each(|(m, x)| *m += x);
        }
        mu.iter_mut().for_each(|m| *m /= included.len() as f64);
        let mut sum = 0.0;
        for &i in &included {
            let c: Vec<f64> = fr.cell(i).iter().zip(&mu).map(|(x, m)| x - m).collect();
            let set = &dict.bins[bins[i].unwrap() as usize];
            let mut best = f64::INFINITY;
            for j in 0..set.len() {
                best = best.min(cosine_distance(&c, set.vector(j)));
            }
            sum += best;
        }
        let expected = sum / included.len() as f64;
        assert!((eval.value - expected).abs() <= 1e-12 * expected.abs());
        assert_eq!(eval.included, included.len());
        assert_eq!(eval.empty_bin_fallbacks, 0);
    }

    #[test]
    fn single_bin_reduces_to_hypercolumn() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 5;
        let raw_style = random_set(&mut rng, 25, dim);
        let mu_s = mean_of((0..raw_style.len()).map(|j| raw_style.vector(j)), dim);
        let rendered = random_set(&mut rng, 16, dim);
        let dict = RotatedStyleDictionary::new(180.0, vec![2, 3], mu_s.clone(), vec![centered(&raw_style, &mu_s).unwrap()], 0).unwrap();
        let fr = map_from(&rendered, 4, 4, vec![2, 3]);
        let angles = AngleSetImage::new(4, 4, 180.0, vec![Some(0); 16]).unwrap();
        let a = nnfm_directional(&fr, &angles, &dict).unwrap().value;
        let b = nnfm_hypercolumn(&rendered, &raw_style, &mu_s).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn empty_bin_falls_back_to_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 3;
        let bins = vec![
            random_set(&mut rng, 3, dim),
            FeatureSet::new(dim),
            FeatureSet::new(dim),
            random_set(&mut rng, 3, dim),
            FeatureSet::new(dim),
            FeatureSet::new(dim),
        ];
        let dict = RotatedStyleDictionary::new(30.0, vec![dim], vec![0.0; dim], bins, 0).unwrap();
        assert_eq!(fallback_bin(&dict, 1), Some(0));
        assert_eq!(fallback_bin(&dict, 2), Some(3));
        assert_eq!(fallback_bin(&dict, 5), Some(0));
        // Bin 4 is one step from 3 and two from 0.
        assert_eq!(fallback_bin(&dict, 4), Some(3));
        let fr = map_from(&random_set(&mut rng, 4, dim), 2, 2, vec![dim]);
        let angles = AngleSetImage::new(2, 2, 30.0, vec![Some(1), Some(0), None, Some(2)]).unwrap();
        let eval = nnfm_directional(&fr, &angles, &dict).unwrap();
        assert_eq!(eval.empty_bin_fallbacks, 2);
        assert_eq!(eval.matches[0].unwrap().bin, 0);
        assert_eq!(eval.matches[3].unwrap().bin, 3);
        assert_eq!(eval.matches[2], None);
    }

    #[test]
    fn unusable_dictionary_is_an_error() {
        let dict = RotatedStyleDictionary::new(90.0, vec![2], vec![0.0; 2], vec![FeatureSet::new(2); 2], 3).unwrap();
        let fr = map_from(&FeatureSet::from_vectors(2, [vec![1.0, 0.0]]).unwrap(), 1, 1, vec![2]);
        let angles = AngleSetImage::new(1, 1, 90.0, vec![Some(0)]).unwrap();
        assert!(matches!(nnfm_directional(&fr, &angles, &dict), Err(Error::EmptyRegion(3))));
    }

    #[test]
    fn self_match_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dim = 4;
        let raw = random_set(&mut rng, 9, dim);
        let mu = mean_of((0..9).map(|j| raw.vector(j)), dim);
        let dict = RotatedStyleDictionary::new(180.0, vec![dim], mu.clone(), vec![centered(&raw, &mu).unwrap()], 0).unwrap();
        let fr = map_from(&raw, 3, 3, vec![dim]);
        let angles = AngleSetImage::new(3, 3, 180.0, vec![Some(0); 9]).unwrap();
        assert!(nnfm_directional(&fr, &angles, &dict).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn flipping_a_bin_changes_the_match() {
        let dim = 2;
        let bins = vec![
            FeatureSet::from_vectors(dim, [vec![1.0, 0.0]]).unwrap(),
            FeatureSet::from_vectors(dim, [vec![0.0, 1.0]]).unwrap(),
        ];
        let dict = RotatedStyleDictionary::new(90.0, vec![dim], vec![0.0; dim], bins, 0).unwrap();
        let fr = map_from(&FeatureSet::from_vectors(dim, [vec![1.0, 0.2], vec![-1.0, -0.2]]).unwrap(), 2, 1, vec![dim]);
        let a = nnfm_directional(&fr, &AngleSetImage::new(2, 1, 90.0, vec![Some(0), Some(0)]).unwrap(), &dict).unwrap();
        let b = nnfm_directional(&fr, &AngleSetImage::new(2, 1, 90.0, vec![Some(1), Some(0)]).unwrap(), &dict).unwrap();
        assert_eq!(a.matches[0].unwrap().bin, 0);
        assert_eq!(b.matches[0].unwrap().bin, 1);
        assert_ne!(a.value, b.value);
    }

    #[test]
    fn gradient_matches_fixed_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dim = 6;
        let dict = three_bin_dict(&mut rng, dim, [5, 7, 4]);
        let (w, h) = (4, 4);
        let mut fr = map_from(&random_set(&mut rng, w * h, dim), w, h, vec![3, 3]);
        let bins: Vec<Option<u16>> = (0..w * h).map(|i| if i % 5 == 0 { None } else { Some((i % 3) as u16) }).collect();
        let angles = AngleSetImage::new(w, h, 60.0, bins).unwrap();
        let eval = nnfm_directional(&fr, &angles, &dict).unwrap();
        let step = 1e-6;
        for k in 0..fr.data.len() {
            let orig = fr.data[k];
            fr.data[k] = orig + step;
            let p = nnfm_fixed(&fr, &angles, None, std::slice::from_ref(&dict), &eval.matches).unwrap();
            fr.data[k] = orig - step;
            let m = nnfm_fixed(&fr, &angles, None, std::slice::from_ref(&dict), &eval.matches).unwrap();
            fr.data[k] = orig;
            let fd = (p - m) / (2.0 * step);
            assert!((fd - eval.grad[k]).abs() < 1e-7, "coordinate {k}: {fd} vs {}", eval.grad[k]);
        }
    }

    #[test]
    fn regions_use_their_own_dictionary_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dim = 3;
        let d0 = RotatedStyleDictionary::new(180.0, vec![dim], vec![0.0; dim], vec![random_set(&mut rng, 4, dim)], 0).unwrap();
        let d1 = RotatedStyleDictionary::new(180.0, vec![dim], vec![0.0; dim], vec![random_set(&mut rng, 6, dim)], 1).unwrap();
        let fr = map_from(&random_set(&mut rng, 8, dim), 4, 2, vec![dim]);
        let regions = [0, 0, 1, 1, 0, 1, 0, 1];
        let angles = AngleSetImage::new(4, 2, 180.0, vec![Some(0); 8]).unwrap();
        let eval = nnfm_routed(&fr, &angles, Some(&regions), &[d0, d1]).unwrap();
        for (m, r) in eval.matches.iter().zip(regions) {
            assert_eq!(m.unwrap().region, r);
        }
        // Gradient of each region sums to zero (its mean absorbs translations).
        for r in 0..2u32 {
            for c in 0..dim {
                let s: f64 = (0..8).filter(|&i| regions[i] == r).map(|i| eval.grad[i * dim + c]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }
}
