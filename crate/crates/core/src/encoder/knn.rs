use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// The `k` nearest neighbors of every point by Euclidean distance, excluding
/// the point itself, ordered by (distance, index). Brute force, O(N^2).
pub fn knn_indices(points: &[[f64; 3]], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    if k == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    if k >= n {
        return Err(Error::Config(format!(
            "knn_k = {k} needs at least {} points, cloud has {n}",
            k + 1
        )));
    }
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            cand.clear();
            cand.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, q)| {
                        let d =
                            (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                        (d, j)
                    }),
            );
            cand.select_nth_unstable_by(k - 1, order);
            let head = &mut cand[..k];
            head.sort_unstable_by(order);
            head.iter().map(|&(_, j)| j).collect()
        })
        .collect())
}

pub fn cloud_xyz(cloud: &PointCloud) -> Result<Vec<[f64; 3]>> {
    let [ix, iy, iz] = cloud.schema().xyz()?;
    Ok(cloud
        .rows()
        .take(cloud.len())
        .map(|r| [r[ix], r[iy], r[iz]])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_all_pairs_sort() {
        let pts = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [1.0, 1.0, 1.0],
            [-1.0, 0.0, 0.0],
            [0.0, 0.0, 3.0],
        ];
        let got = knn_indices(&pts, 2).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let mut all: Vec<(f64, usize)> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let q = pts[j];
                    (
                        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)),
                        j,
                    )
                })
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want: Vec<usize> = all[..2].iter().map(|x| x.1).collect();
            assert_eq!(got[i], want, "point {i}");
        }
        // point 0 has two neighbors at distance 1: indices 1 and 4
        assert_eq!(got[0], vec![1, 4]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(knn_indices(&pts, 2).unwrap()[0], vec![1, 2]);
    }

    #[test]
    fn k_must_be_below_n() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0]];
        assert!(knn_indices(&pts, 2).is_err());
        assert_eq!(knn_indices(&pts, 0).unwrap(), vec![Vec::<usize>::new(); 2]);
    }
}
