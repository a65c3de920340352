use std::collections::BTreeMap;

use rayon::prelude::*;
use rug::{Integer, Rational};

use super::{echelon_of, monomial_row, point_dimension, DetError};
use crate::multiidx::{enumerate_delta, MultiIndex};
use crate::rationals::{PointCloud, QPoint};

/// A degree-`d` hypersurface `Σ_μ c_μ x^μ = 0`, coefficients in graded lex column
/// order as a primitive integer vector with positive leading entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypersurface {
    pub degree: u32,
    pub dim: usize,
    pub coeffs: Vec<Integer>,
}

impl Hypersurface {
    pub fn columns(&self) -> Vec<MultiIndex> {
        enumerate_delta(self.dim, self.degree)
    }

    pub fn eval(&self, p: &[Rational]) -> Rational {
        let row = monomial_row(p, &self.columns());
        row.iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0)
            .fold(Rational::new(), |acc, (m, c)| acc + Rational::from(m * c))
    }

    pub fn contains(&self, p: &[Rational]) -> bool {
        self.eval(p) == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Grid,
    Greedy,
}

impl Strategy {
    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Grid => "grid",
            Strategy::Greedy => "greedy",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverPiece {
    pub hypersurface: Hypersurface,
    pub point_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cover {
    pub degree: u32,
    pub pieces: Vec<CoverPiece>,
    pub uncovered: Vec<usize>,
    pub strategy: Strategy,
    pub radius: Option<Rational>,
}

impl Cover {
    pub fn size(&self) -> usize {
        self.pieces.len()
    }

    /// Every index is covered exactly once and lies on its hypersurface.
    pub fn verify(&self, points: &PointCloud) -> bool {
        let mut seen = vec![false; points.points.len()];
        for piece in &self.pieces {
            for &i in &piece.point_indices {
                if i >= seen.len() || seen[i] || !piece.hypersurface.contains(points.points[i].coords()) {
                    return false;
                }
                seen[i] = true;
            }
        }
        self.uncovered.is_empty() && seen.iter().all(|&s| s)
    }
}

/// Some hypersurface of degree `d` through all the given points, if one exists.
fn hypersurface_through(points: &[&QPoint], columns: &[MultiIndex], d: u32, dim: usize) -> Option<Hypersurface> {
    let entries: Vec<Vec<Rational>> = points.iter().map(|p| monomial_row(p.coords(), columns)).collect();
    let (e, _) = echelon_of(&entries, columns.len());
    e.kernel_vector().map(|coeffs| Hypersurface {
        degree: d,
        dim,
        coeffs,
    })
}

/// Incremental rational row reduction, used to grow a rank-deficient subset.
struct Reducer {
    rows: Vec<(usize, Vec<Rational>)>,
}

impl Reducer {
    /// The reduced row, or `None` if it already lies in the span.
    fn reduce(&self, mut v: Vec<Rational>) -> Option<(usize, Vec<Rational>)> {
        for (p, row) in &self.rows {
            if v[*p] != 0 {
                let f = v[*p].clone();
                for (x, r) in v.iter_mut().zip(row) {
                    if *r != 0 {
                        *x -= Rational::from(&f * r);
                    }
                }
            }
        }
        let p = v.iter().position(|x| *x != 0)?;
        let inv = Rational::from(v[p].recip_ref());
        for x in &mut v {
            *x *= &inv;
        }
        Some((p, v))
    }
}

fn greedy(points: &PointCloud, d: u32, dim: usize) -> Cover {
    let columns = enumerate_delta(dim, d);
    let full = columns.len();
    let mut remaining: Vec<usize> = (0..points.points.len()).collect();
    let mut pieces = Vec::new();
    while !remaining.is_empty() {
        let mut red = Reducer { rows: Vec::new() };
        let mut chosen = Vec::new();
        for &i in &remaining {
            let row = monomial_row(points.points[i].coords(), &columns);
            match red.reduce(row) {
                None => chosen.push(i),
                Some(r) if red.rows.len() + 1 < full => {
                    red.rows.push(r);
                    chosen.push(i);
                }
                Some(_) => {}
            }
        }
        let refs: Vec<&QPoint> = chosen.iter().map(|&i| &points.points[i]).collect();
        let hs = hypersurface_through(&refs, &columns, d, dim).expect("rank stays below the column count");
        let (on, off): (Vec<usize>, Vec<usize>) =
            remaining.iter().partition(|&&i| hs.contains(points.points[i].coords()));
        pieces.push(CoverPiece {
            hypersurface: hs,
            point_indices: on,
        });
        remaining = off;
    }
    Cover {
        degree: d,
        pieces,
        uncovered: Vec::new(),
        strategy: Strategy::Greedy,
        radius: None,
    }
}

fn cell_of(t: &[Rational], side: &Rational, cells: usize) -> Vec<usize> {
    t.iter()
        .map(|x| {
            let k = Rational::from(x / side).floor().numer().to_usize().unwrap_or(0);
            k.min(cells - 1)
        })
        .collect()
}

fn grid(points: &PointCloud, params: &[Vec<Rational>], d: u32, dim: usize, r: &Rational) -> Result<Cover, DetError> {
    if *r <= 0 {
        return Err(DetError::BadRadius);
    }
    let side = Rational::from(r * 2u32);
    let cells = Rational::from(side.recip_ref()).ceil().numer().to_usize().unwrap_or(usize::MAX).max(1);
    let mut boxes: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, t) in params.iter().enumerate() {
        boxes.entry(cell_of(t, &side, cells)).or_default().push(i);
    }
    let mut order: Vec<(Vec<usize>, Vec<usize>)> = boxes.into_iter().collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    let columns = enumerate_delta(dim, d);
    let own: Vec<Result<Hypersurface, DetError>> = order
        .par_iter()
        .map(|(cell, idx)| {
            let refs: Vec<&QPoint> = idx.iter().map(|&i| &points.points[i]).collect();
            hypersurface_through(&refs, &columns, d, dim).ok_or_else(|| DetError::CoverFailure {
                cell: cell.clone(),
                radius: r.clone(),
                degree: d,
            })
        })
        .collect();
    let mut pieces: Vec<CoverPiece> = Vec::new();
    for ((_, idx), hs) in order.iter().zip(own) {
        let hs = hs?;
        // a hypersurface from an earlier box is reused when it already passes through
        let reuse = pieces.iter().position(|p| {
            idx.iter()
                .all(|&i| p.hypersurface.contains(points.points[i].coords()))
        });
        match reuse {
            Some(k) => pieces[k].point_indices.extend(idx),
            None => pieces.push(CoverPiece {
                hypersurface: hs,
                point_indices: idx.clone(),
            }),
        }
    }
    for p in &mut pieces {
        p.point_indices.sort_unstable();
    }
    Ok(Cover {
        degree: d,
        pieces,
        uncovered: Vec::new(),
        strategy: Strategy::Grid,
        radius: Some(r.clone()),
    })
}

/// Covers `points` by degree-`d` hypersurfaces. `params` holds a parameter point in
/// `(0,1)^m` per point and `radius` the grid radius; both are needed for the grid
/// strategy only.
pub fn cover_points(
    points: &PointCloud,
    params: Option<&[Vec<Rational>]>,
    d: u32,
    strategy: Strategy,
    radius: Option<&Rational>,
) -> Result<Cover, DetError> {
    let dim = point_dimension(&points.points)?;
    if dim == 0 && !points.points.is_empty() {
        return Err(DetError::Precondition("points must have positive dimension".into()));
    }
    match strategy {
        Strategy::Greedy => Ok(greedy(points, d, dim)),
        Strategy::Grid => {
            let params = params.ok_or_else(|| DetError::Precondition("grid cover needs parameters".into()))?;
            if params.len() != points.points.len() {
                return Err(DetError::Precondition("one parameter point per point".into()));
            }
            let r = radius.ok_or_else(|| DetError::Precondition("grid cover needs a radius".into()))?;
            grid(points, params, d, dim, r)
        }
    }
}

/// Grid cover starting at `start` and halving the radius on failure, down to `floor`.
pub fn cover_grid_adaptive(
    points: &PointCloud,
    params: &[Vec<Rational>],
    d: u32,
    start: &Rational,
    floor: &Rational,
) -> Result<Cover, DetError> {
    let mut r = start.clone();
    loop {
        match cover_points(points, Some(params), d, Strategy::Grid, Some(&r)) {
            Err(DetError::CoverFailure { .. }) if Rational::from(&r / 2u32) >= *floor => r /= 2u32,
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from((a, b))
    }

    fn cloud(pts: Vec<Vec<Rational>>) -> PointCloud {
        PointCloud {
            points: pts.into_iter().map(QPoint::new).collect(),
            height_bound: 0,
        }
    }

    #[test]
    fn collinear_plus_one_needs_two_lines() {
        let pts = cloud(vec![
            vec![q(0, 1), q(0, 1)],
            vec![q(1, 1), q(1, 1)],
            vec![q(2, 1), q(2, 1)],
            vec![q(1, 1), q(0, 1)],
        ]);
        let c = cover_points(&pts, None, 1, Strategy::Greedy, None).unwrap();
        assert_eq!(c.size(), 2);
        assert!(c.verify(&pts));
    }

    #[test]
    fn few_points_lie_on_one_hypersurface() {
        let pts = cloud(vec![
            vec![q(1, 3), q(2, 7)],
            vec![q(5, 2), q(-1, 9)],
            vec![q(0, 1), q(4, 5)],
            vec![q(6, 7), q(1, 1)],
            vec![q(-3, 4), q(2, 3)],
        ]);
        for s in [Strategy::Greedy, Strategy::Grid] {
            let params: Vec<Vec<Rational>> = (0..5).map(|i| vec![q(2 * i + 1, 10)]).collect();
            let c = cover_points(&pts, Some(&params), 2, s, Some(&q(1, 2))).unwrap();
            assert_eq!(c.size(), 1, "{s:?}");
            assert!(c.verify(&pts));
        }
    }

    #[test]
    fn grid_failure_and_adaptive_radius() {
        // points on y = x³ are not on one conic once there are six of them
        let ts: Vec<Rational> = (1..=12).map(|k| q(k, 13)).collect();
        let pts = cloud(ts.iter().map(|t| vec![t.clone(), Rational::from(t * t) * t]).collect());
        let params: Vec<Vec<Rational>> = ts.iter().map(|t| vec![t.clone()]).collect();
        assert!(matches!(
            cover_points(&pts, Some(&params), 2, Strategy::Grid, Some(&q(1, 2))),
            Err(DetError::CoverFailure { .. })
        ));
        let c = cover_grid_adaptive(&pts, &params, 2, &q(1, 4), &q(1, 64)).unwrap();
        assert!(c.verify(&pts));
        assert!(c.radius.unwrap() < q(1, 4));
        assert!(matches!(
            cover_grid_adaptive(&pts, &params, 2, &q(1, 2), &q(1, 2)),
            Err(DetError::CoverFailure { .. })
        ));
    }

    #[test]
    fn grid_reuses_hypersurfaces() {
        let ts: Vec<Rational> = (1..=20).map(|k| q(k, 21)).collect();
        let pts = cloud(ts.iter().map(|t| vec![t.clone(), Rational::from(t * t)]).collect());
        let params: Vec<Vec<Rational>> = ts.iter().map(|t| vec![t.clone()]).collect();
        let c = cover_points(&pts, Some(&params), 2, Strategy::Grid, Some(&q(1, 8))).unwrap();
        assert_eq!(c.size(), 1);
        assert!(c.verify(&pts));
    }
}
