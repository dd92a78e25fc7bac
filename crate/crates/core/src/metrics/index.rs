use std::collections::HashMap;

use crate::geometry::Point3;

fn dist2(a: Point3, b: Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Uniform hash grid over a fixed point set.
#[derive(Clone, Debug)]
pub struct GridIndex<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Point3], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ([i64::MAX; 3], [i64::MIN; 3]);
        for (i, &p) in points.iter().enumerate() {
            let key = Self::key_of(cell, p);
            for d in 0..3 {
                lo[d] = lo[d].min(key[d]);
                hi[d] = hi[d].max(key[d]);
            }
            cells.entry(key).or_default().push(i);
        }
        Self {
            points,
            cell,
            cells,
            lo,
            hi,
        }
    }

    fn key_of(cell: f64, p: Point3) -> [i64; 3] {
        p.map(|v| (v / cell).floor() as i64)
    }

    fn visit_shell(&self, center: [i64; 3], r: i64, mut f: impl FnMut(usize)) {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if let Some(ids) = self.cells.get(&key) {
                        ids.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }

    /// Index and squared distance of the closest point; ties go to the
    /// lower index.
    pub fn nearest(&self, q: Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let center = Self::key_of(self.cell, q);
        // rings beyond this reach no occupied cell
        let max_r = (0..3)
            .map(|d| (center[d] - self.lo[d]).abs().max((self.hi[d] - center[d]).abs()))
            .max()
            .unwrap_or(0);
        // rings closer than the occupied box are empty
        let first = (0..3)
            .map(|d| (self.lo[d] - center[d]).max(center[d] - self.hi[d]).max(0))
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for r in first..=max_r {
            if (2 * r + 1).pow(3) as usize > 8 * self.points.len() && best.is_none() {
                return brute_nearest(self.points, q);
            }
            self.visit_shell(center, r, |i| {
                let d = dist2(q, self.points[i]);
                if best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                    best = Some((i, d));
                }
            });
            // anything in ring r+1 is at least r cells away
            if let Some((_, bd)) = best {
                let reach = r as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best
    }

    /// Indices within distance `radius` of `q`, ascending.
    pub fn within(&self, q: Point3, radius: f64) -> Vec<usize> {
        let center = Self::key_of(self.cell, q);
        let reach = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for r in 0..=reach {
            self.visit_shell(center, r, |i| {
                if dist2(q, self.points[i]) <= r2 {
                    out.push(i);
                }
            });
        }
        out.sort_unstable();
        out
    }
}

/// Linear-scan nearest neighbour with the same tie rule.
pub fn brute_nearest(points: &[Point3], q: Point3) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, dist2(q, p)))
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn cloud(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [0; 3].map(|_| rng.random_range(-0.5..0.5))).collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(512, 1);
        for cell in [0.01, 0.04, 0.3] {
            let idx = GridIndex::new(&pts, cell);
            for q in cloud(512, 2).into_iter().chain([[3.0, -2.0, 0.0]]) {
                assert_eq!(idx.nearest(q), brute_nearest(&pts, q));
            }
        }
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let pts = cloud(512, 3);
        let idx = GridIndex::new(&pts, 0.04);
        for q in cloud(64, 4) {
            let want: Vec<usize> = (0..pts.len()).filter(|&i| dist2(q, pts[i]) <= 0.1 * 0.1).collect();
            assert_eq!(idx.within(q, 0.1), want);
        }
    }

    #[test]
    fn empty_set_has_no_neighbour() {
        assert!(GridIndex::new(&[], 0.1).nearest([0.0; 3]).is_none());
    }
}
