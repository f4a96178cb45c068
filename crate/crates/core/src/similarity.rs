//! Dynamic time warping with a Sakoe-Chiba band.
//!
//! Local costs are L1 distances between points; the accumulated cost sums
//! their squares along the warping path and the reported distance is the
//! square root of the optimum. Restricting `|i - j| <= B` brings the work
//! down to `O(B n)` cells, and the distance routine only keeps two band rows
//! in memory.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A univariate or multivariate series stored point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    dim: usize,
}

impl Series {
    /// Builds a series of `values.len() / dim` points with `dim` features each.
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Usage("series dimension must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Usage("series must contain at least one point".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::Usage(format!(
                "{} values do not divide into points of dimension {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Usage(format!("non-finite value at index {pos}")));
        }
        Ok(Self { values, dim })
    }

    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Sakoe-Chiba band around the diagonal of the cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// Only cells with `|i - j| <= width` are visited.
    Width(usize),
    /// Classical DTW over the full matrix.
    Unbounded,
}

impl Band {
    /// Effective half-width for a pair of lengths.
    pub fn half_width(self, n: usize, m: usize) -> usize {
        match self {
            Band::Width(b) => b.min(n.max(m)),
            Band::Unbounded => n.max(m),
        }
    }
}

/// Monotone alignment between two series, as `(i, j)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    pub steps: Vec<(usize, usize)>,
}

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// All-pairs DTW distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
    band: Band,
    symmetric: bool,
}

impl DistanceMatrix {
    /// Wraps a row-major `size x size` matrix. The diagonal must be zero.
    pub fn from_entries(size: usize, entries: Vec<f64>, band: Band) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::Usage(format!(
                "expected {} entries for a {size}x{size} matrix, got {}",
                size * size,
                entries.len()
            )));
        }
        if (0..size).any(|i| entries[i * size + i] != 0.0) {
            return Err(Error::Usage("distance matrix diagonal must be zero".into()));
        }
        let symmetric = (0..size).all(|i| (0..i).all(|j| entries[i * size + j] == entries[j * size + i]));
        Ok(Self {
            size,
            entries,
            band,
            symmetric,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// L1 distance between two points of equal dimension.
pub fn local_cost(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(l1(x, y))
}

#[inline]
fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn check_pair(x: &Series, y: &Series, band: Band) -> Result<usize> {
    if x.dim != y.dim {
        return Err(Error::Usage(format!(
            "dimension mismatch: {} vs {}",
            x.dim, y.dim
        )));
    }
    let (n, m) = (x.len(), y.len());
    if n == 0 || m == 0 {
        return Err(Error::Usage("empty series".into()));
    }
    let b = band.half_width(n, m);
    if n.abs_diff(m) > b {
        return Err(Error::InfeasibleBand { band: b, n, m });
    }
    Ok(b)
}

/// Banded DTW distance.
pub fn dtw_distance(x: &Series, y: &Series, band: Band) -> Result<f64> {
    dtw_distance_counted(x, y, band).map(|(d, _)| d)
}

/// Banded DTW distance plus the number of DP cells evaluated.
pub fn dtw_distance_counted(x: &Series, y: &Series, band: Band) -> Result<(f64, usize)> {
    let b = check_pair(x, y, band)?;
    let (n, m) = (x.len(), y.len());
    let width = m.min(2 * b + 1);
    let mut prev = vec![f64::INFINITY; width];
    let mut curr = vec![f64::INFINITY; width];
    let mut prev_lo = 0usize;
    let mut prev_hi = 0usize;
    let mut cells = 0usize;

    for i in 0..n {
        let lo = i.saturating_sub(b);
        let hi = (m - 1).min(i + b);
        for j in lo..=hi {
            cells += 1;
            let c = l1(x.point(i), y.point(j));
            let c = c * c;
            let acc = if i == 0 && j == 0 {
                c
            } else {
                let mut best = f64::INFINITY;
                if i > 0 {
                    if j > 0 && j > prev_lo && j - 1 <= prev_hi {
                        best = best.min(prev[j - 1 - prev_lo]);
                    }
                    if j >= prev_lo && j <= prev_hi {
                        best = best.min(prev[j - prev_lo]);
                    }
                }
                if j > lo {
                    best = best.min(curr[j - 1 - lo]);
                }
                best + c
            };
            curr[j - lo] = acc;
        }
        std::mem::swap(&mut prev, &mut curr);
        prev_lo = lo;
        prev_hi = hi;
    }
    Ok((prev[m - 1 - prev_lo].sqrt(), cells))
}

/// Optimal warping path. Ties prefer the diagonal, then `(i-1, j)`, then `(i, j-1)`.
pub fn dtw_path(x: &Series, y: &Series, band: Band) -> Result<WarpingPath> {
    let b = check_pair(x, y, band)?;
    let (n, m) = (x.len(), y.len());
    let width = m.min(2 * b + 1);
    let lo = |i: usize| i.saturating_sub(b);
    let hi = |i: usize| (m - 1).min(i + b);
    let mut table = vec![f64::INFINITY; n * width];
    let at = |table: &[f64], i: usize, j: usize| -> f64 {
        if j < lo(i) || j > hi(i) {
            f64::INFINITY
        } else {
            table[i * width + j - lo(i)]
        }
    };

    for i in 0..n {
        for j in lo(i)..=hi(i) {
            let c = l1(x.point(i), y.point(j));
            let c = c * c;
            let acc = if i == 0 && j == 0 {
                c
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(at(&table, i - 1, j - 1));
                }
                if i > 0 {
                    best = best.min(at(&table, i - 1, j));
                }
                if j > 0 {
                    best = best.min(at(&table, i, j - 1));
                }
                best + c
            };
            table[i * width + j - lo(i)] = acc;
        }
    }

    let mut steps = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let mut next = None;
        let mut best = f64::INFINITY;
        let candidates = [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ];
        for (pi, pj) in candidates.into_iter().flatten() {
            let v = at(&table, pi, pj);
            if v < best {
                best = v;
                next = Some((pi, pj));
            }
        }
        // every in-band cell other than (0,0) has a finite predecessor
        let (pi, pj) = next.expect("banded DP cell without finite predecessor");
        i = pi;
        j = pj;
        steps.push((i, j));
    }
    steps.reverse();
    Ok(WarpingPath { steps })
}

/// Sum of squared local costs along a path.
pub fn path_cost(x: &Series, y: &Series, path: &WarpingPath) -> f64 {
    path.steps.iter().fold(0.0, |acc, &(i, j)| {
        let c = l1(x.point(i), y.point(j));
        acc + c * c
    })
}

/// DTW distance between every pair of series. All series must share one
/// length and dimension; the upper triangle is computed and mirrored.
pub fn pairwise_distances(set: &[Series], band: Band) -> Result<DistanceMatrix> {
    let size = set.len();
    if let Some(first) = set.first() {
        if let Some((idx, s)) = set
            .iter()
            .enumerate()
            .find(|(_, s)| s.len() != first.len() || s.dim != first.dim)
        {
            return Err(Error::Usage(format!(
                "series {idx} has length {} and dimension {}, expected {} and {}",
                s.len(),
                s.dim,
                first.len(),
                first.dim
            )));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..size)
        .flat_map(|i| (i + 1..size).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&set[i], &set[j], band))
        .collect::<Result<Vec<f64>>>()?;

    let mut entries = vec![0.0; size * size];
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        entries[i * size + j] = v;
        entries[j * size + i] = v;
    }
    Ok(DistanceMatrix {
        size,
        entries,
        band,
        symmetric: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Series {
        Series::scalar(v.to_vec()).unwrap()
    }

    /// Exhaustive minimum over monotone warping paths inside the band.
    fn brute_force(x: &Series, y: &Series, b: usize) -> f64 {
        fn walk(x: &Series, y: &Series, b: usize, i: usize, j: usize, acc: f64, best: &mut f64) {
            let c = l1(x.point(i), y.point(j));
            let acc = acc + c * c;
            if i == x.len() - 1 && j == y.len() - 1 {
                *best = best.min(acc);
                return;
            }
            for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < x.len() && nj < y.len() && ni.abs_diff(nj) <= b {
                    walk(x, y, b, ni, nj, acc, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        walk(x, y, b, 0, 0, 0.0, &mut best);
        best.sqrt()
    }

    #[test]
    fn local_cost_examples() {
        assert_eq!(local_cost(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(local_cost(&[1.0], &[4.0]).unwrap(), 3.0);
        assert_eq!(local_cost(&[1.0, 2.0], &[4.0, 0.0]).unwrap(), 5.0);
        assert!(matches!(local_cost(&[1.0], &[1.0, 2.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn distance_examples() {
        let x = s(&[3.0, 1.0, 4.0]);
        for band in [Band::Width(0), Band::Width(1), Band::Unbounded] {
            assert_eq!(dtw_distance(&x, &x, band).unwrap(), 0.0);
        }
        assert_eq!(dtw_distance(&s(&[1.0]), &s(&[4.0]), Band::Width(0)).unwrap(), 3.0);

        let a = s(&[1.0, 2.0, 3.0]);
        let b = s(&[2.0, 3.0, 4.0]);
        let oracle = brute_force(&a, &b, 3);
        assert_eq!(oracle, 2f64.sqrt());
        assert_eq!(dtw_distance(&a, &b, Band::Unbounded).unwrap(), oracle);
    }

    #[test]
    fn infeasible_band_and_empty_input() {
        let err = dtw_distance(&s(&[1.0]), &s(&[1.0, 2.0, 3.0]), Band::Width(1)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleBand { band: 1, n: 1, m: 3 }));
        assert!(Series::scalar(vec![]).is_err());
        assert!(Series::scalar(vec![f64::NAN]).is_err());
    }

    #[test]
    fn path_examples() {
        let x = s(&[1.0, 2.0, 3.0]);
        assert_eq!(
            dtw_path(&x, &x, Band::Unbounded).unwrap().steps,
            vec![(0, 0), (1, 1), (2, 2)]
        );
        assert_eq!(
            dtw_path(&s(&[1.0]), &s(&[1.0, 1.0, 1.0]), Band::Unbounded)
                .unwrap()
                .steps,
            vec![(0, 0), (0, 1), (0, 2)]
        );
        let a = s(&[1.0, 2.0, 3.0]);
        let b = s(&[2.0, 3.0, 4.0]);
        let path = dtw_path(&a, &b, Band::Unbounded).unwrap();
        assert!(path.len() == 3 || path.len() == 4);
        assert_eq!(path_cost(&a, &b, &path), 2.0);
    }

    #[test]
    fn multivariate_uses_l1() {
        let x = Series::new(vec![1.0, 2.0], 2).unwrap();
        let y = Series::new(vec![4.0, 0.0], 2).unwrap();
        assert_eq!(dtw_distance(&x, &y, Band::Width(0)).unwrap(), 5.0);
    }

    #[test]
    fn pairwise_examples() {
        let one = pairwise_distances(&[s(&[1.0, 2.0])], Band::Unbounded).unwrap();
        assert_eq!(one.size(), 1);
        assert_eq!(one.get(0, 0), 0.0);

        let same = pairwise_distances(&[s(&[1.0, 5.0]), s(&[1.0, 5.0])], Band::Width(1)).unwrap();
        assert!(same.row(0).iter().chain(same.row(1)).all(|&v| v == 0.0));

        let set = [s(&[1.0, 2.0, 3.0]), s(&[2.0, 3.0, 4.0]), s(&[9.0, 9.0, 9.0])];
        let d = pairwise_distances(&set, Band::Unbounded).unwrap();
        assert_eq!(d.get(0, 1), brute_force(&set[0], &set[1], 3));
        assert_eq!(d.get(0, 2), brute_force(&set[0], &set[2], 3));
        assert!(d.get(0, 2) > d.get(0, 1));
        assert!(d.is_symmetric());

        assert!(matches!(
            pairwise_distances(&[s(&[1.0]), s(&[1.0, 2.0])], Band::Unbounded),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn banded_oracle_matches_small_exhaustive_grid() {
        // every pair of length-3 series over {0,1,2}, plus unequal lengths
        let all3: Vec<Series> = (0..27)
            .map(|k| s(&[(k % 3) as f64, ((k / 3) % 3) as f64, (k / 9) as f64]))
            .collect();
        for x in &all3 {
            for y in &all3 {
                for b in 0..=3 {
                    assert_eq!(dtw_distance(x, y, Band::Width(b)).unwrap(), brute_force(x, y, b));
                }
            }
        }
        let short = s(&[2.0, 0.0]);
        for y in &all3 {
            assert_eq!(
                dtw_distance(&short, y, Band::Width(1)).unwrap(),
                brute_force(&short, y, 1)
            );
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-5.0f64..5.0, 1..=max_len)
        }

        proptest! {
            #[test]
            fn identity(x in series(12), b in 0usize..6) {
                let x = Series::scalar(x).unwrap();
                prop_assert_eq!(dtw_distance(&x, &x, Band::Width(b)).unwrap(), 0.0);
            }

            #[test]
            fn symmetric_for_equal_lengths(pair in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )), b in 0usize..6) {
                let x = Series::scalar(pair.0).unwrap();
                let y = Series::scalar(pair.1).unwrap();
                prop_assert_eq!(
                    dtw_distance(&x, &y, Band::Width(b)).unwrap(),
                    dtw_distance(&y, &x, Band::Width(b)).unwrap()
                );
            }

            #[test]
            fn path_cost_matches_distance(x in series(10), y in series(10)) {
                let x = Series::scalar(x).unwrap();
                let y = Series::scalar(y).unwrap();
                let b = x.len().abs_diff(y.len()) + 1;
                let d = dtw_distance(&x, &y, Band::Width(b)).unwrap();
                let path = dtw_path(&x, &y, Band::Width(b)).unwrap();
                let steps = &path.steps;
                prop_assert_eq!(steps[0], (0, 0));
                prop_assert_eq!(*steps.last().unwrap(), (x.len() - 1, y.len() - 1));
                prop_assert!(steps.len() >= x.len().max(y.len()));
                prop_assert!(steps.len() <= x.len() + y.len());
                for w in steps.windows(2) {
                    let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                    prop_assert!(di <= 1 && dj <= 1 && di + dj >= 1);
                }
                prop_assert!(steps.iter().all(|&(i, j)| i.abs_diff(j) <= b));
                let cost = path_cost(&x, &y, &path);
                prop_assert!((cost - d * d).abs() <= 1e-9 * (1.0 + cost));
            }

            #[test]
            fn cell_count_bounded(x in series(30), b in 0usize..8) {
                let x = Series::scalar(x).unwrap();
                let (_, cells) = dtw_distance_counted(&x, &x, Band::Width(b)).unwrap();
                prop_assert!(cells <= x.len() * (2 * b + 2));
            }
        }
    }
}
