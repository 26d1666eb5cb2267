use super::morphology::surface;
use super::volume::{voxel_coords, Dims, LabelMask};
use crate::error::{Error, Result};

/// Dice overlap. Two empty masks agree perfectly (1.0).
pub fn dice(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("dice: dims differ {:?} vs {:?}", a.dims(), b.dims())));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Nearest-rank percentile (`q` in (0, 1]) of a sample. Sorts in place.
pub(crate) fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    values[rank.min(n) - 1]
}

/// 95th percentile symmetric surface distance in millimetres.
///
/// Surface voxels are foreground voxels with a background face neighbour.
/// Directed distances in both directions are pooled before taking the
/// nearest-rank percentile.
pub fn hd95(a: &LabelMask, b: &LabelMask, spacing_mm: [f64; 3]) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("hd95: dims differ {:?} vs {:?}", a.dims(), b.dims())));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("hd95 requires two nonempty masks"));
    }
    let (sa, sb) = (surface(a), surface(b));
    let to_b = squared_distance_transform(&sb, spacing_mm);
    let to_a = squared_distance_transform(&sa, spacing_mm);
    let mut pooled: Vec<f64> = sa
        .foreground()
        .into_iter()
        .map(|i| to_b[i].sqrt())
        .chain(sb.foreground().into_iter().map(|i| to_a[i].sqrt()))
        .collect();
    Ok(nearest_rank(&mut pooled, 0.95))
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// foreground voxel of `seeds`, by separable lower envelopes of parabolas.
/// Voxels with no reachable seed stay at `f64::INFINITY`.
pub fn squared_distance_transform(seeds: &LabelMask, spacing_mm: [f64; 3]) -> Vec<f64> {
    let dims = seeds.dims();
    let mut dist: Vec<f64> = seeds
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        transform_axis(&mut dist, dims, axis, spacing_mm[axis] * spacing_mm[axis]);
    }
    dist
}

fn transform_axis(dist: &mut [f64], dims: Dims, axis: usize, weight: f64) {
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut hull = vec![0usize; n];
    let mut bounds = vec![0.0f64; n + 1];
    for start in 0..dist.len() {
        if voxel_coords(dims, start)[axis] != 0 {
            continue;
        }
        for (p, slot) in line.iter_mut().enumerate() {
            *slot = dist[start + p * stride];
        }
        envelope_1d(&line, weight, &mut out, &mut hull, &mut bounds);
        for (p, &v) in out.iter().enumerate() {
            dist[start + p * stride] = v;
        }
    }
}

/// `out[p] = min_q weight * (p - q)^2 + f[q]` over finite `f[q]`.
fn envelope_1d(f: &[f64], weight: f64, out: &mut [f64], hull: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    let intersect = |q: usize, v: usize| -> f64 {
        ((f[q] + weight * (q * q) as f64) - (f[v] + weight * (v * v) as f64)) / (2.0 * weight * (q as f64 - v as f64))
    };
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                hull[0] = q;
                bounds[0] = f64::NEG_INFINITY;
                bounds[1] = f64::INFINITY;
                break;
            }
            let s = intersect(q, hull[k as usize]);
            if s <= bounds[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            hull[k as usize] = q;
            bounds[k as usize] = s;
            bounds[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (p, o) in out.iter_mut().enumerate() {
        while bounds[j + 1] < p as f64 {
            j += 1;
        }
        let q = hull[j];
        let d = p as f64 - q as f64;
        *o = weight * d * d + f[q];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(dims: Dims, p: [usize; 3]) -> LabelMask {
        let mut m = LabelMask::empty(dims).unwrap();
        m.set(p[0], p[1], p[2], true);
        m
    }

    #[test]
    fn dice_examples() {
        let a = LabelMask::from_box([6, 6, 6], [0, 0, 0], [2, 2, 2]).unwrap();
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let far = LabelMask::from_box([6, 6, 6], [4, 4, 4], [2, 2, 2]).unwrap();
        assert_eq!(dice(&a, &far).unwrap(), 0.0);
        // shifted by one along x: 4 of 8 voxels overlap
        let half = LabelMask::from_box([6, 6, 6], [1, 0, 0], [2, 2, 2]).unwrap();
        assert_eq!(dice(&a, &half).unwrap(), 0.5);
        let e = LabelMask::empty([6, 6, 6]).unwrap();
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&a, &e).unwrap(), 0.0);
        assert!(dice(&a, &LabelMask::empty([6, 6, 5]).unwrap()).is_err());
    }

    #[test]
    fn hd95_examples() {
        let a = LabelMask::from_box([8, 8, 8], [1, 1, 1], [4, 3, 2]).unwrap();
        assert_eq!(hd95(&a, &a, [1.0; 3]).unwrap(), 0.0);
        let p = single([8, 8, 8], [1, 4, 4]);
        let q = single([8, 8, 8], [4, 4, 4]);
        assert_eq!(hd95(&p, &q, [1.0; 3]).unwrap(), 3.0);
        assert_eq!(hd95(&p, &q, [0.5, 2.0, 2.0]).unwrap(), 1.5);
    }

    #[test]
    fn hd95_parallel_plates() {
        let a = LabelMask::from_box([6, 6, 6], [0, 0, 1], [6, 6, 1]).unwrap();
        let b = LabelMask::from_box([6, 6, 6], [0, 0, 3], [6, 6, 1]).unwrap();
        assert_eq!(hd95(&a, &b, [1.0; 3]).unwrap(), 2.0);
    }

    #[test]
    fn hd95_requires_nonempty() {
        let a = single([4, 4, 4], [0, 0, 0]);
        let e = LabelMask::empty([4, 4, 4]).unwrap();
        assert!(hd95(&a, &e, [1.0; 3]).is_err());
        assert!(hd95(&e, &a, [1.0; 3]).is_err());
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let dims = [7, 5, 6];
        let spacing = [0.8, 1.3, 2.1];
        let pts = [[0usize, 0, 0], [6, 4, 5], [3, 2, 1], [1, 4, 3]];
        let mut m = LabelMask::empty(dims).unwrap();
        for p in pts {
            m.set(p[0], p[1], p[2], true);
        }
        let dt = squared_distance_transform(&m, spacing);
        for (idx, &got) in dt.iter().enumerate() {
            let v = voxel_coords(dims, idx);
            let want = pts
                .iter()
                .map(|p| {
                    (0..3)
                        .map(|a| {
                            let d = (v[a] as f64 - p[a] as f64) * spacing[a];
                            d * d
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((got - want).abs() < 1e-9, "voxel {v:?}: {got} vs {want}");
        }
    }

    #[test]
    fn nearest_rank_percentile() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 0.95), 95.0);
        assert_eq!(nearest_rank(&mut v, 0.025), 3.0);
        assert_eq!(nearest_rank(&mut v, 0.975), 98.0);
        let mut one = vec![4.0];
        assert_eq!(nearest_rank(&mut one, 0.95), 4.0);
    }
}
