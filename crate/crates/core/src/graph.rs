//! Directed weighted graphs and geometric weight construction.
//!
//! The weight matrix follows the incoming-edge convention: `W[m][n] > 0` iff
//! the edge `n -> m` exists, so row `m` lists the incoming neighbourhood of `m`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Storage};

/// Mean Earth radius in kilometres, used for the equirectangular projection.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    weights: Matrix,
}

impl Graph {
    /// Wraps a weight matrix. Negative or non-finite weights are rejected.
    pub fn from_weights(weights: Matrix) -> Result<Graph> {
        if weights.n() == 0 {
            return Err(Error::invalid("graph must have at least one vertex"));
        }
        if let Some((i, j, v)) = weights.triplets().find(|(_, _, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!(
                "weight W[{i}][{j}] = {v} is not a finite positive number"
            )));
        }
        Ok(Graph { weights })
    }

    /// Builds a graph from directed edges `(src, dst, weight)`; edge `src -> dst`
    /// lands at `W[dst][src]`. Zero weights mean "no edge" and are dropped.
    pub fn from_edges<I>(n_vertices: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut triplets = Vec::new();
        for (src, dst, w) in edges {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("edge ({src}, {dst}) has invalid weight {w}")));
            }
            if w > 0.0 {
                triplets.push((dst, src, w));
            }
        }
        let weights = Matrix::from_triplets(n_vertices, triplets, Storage::auto(n_vertices))?;
        Graph::from_weights(weights)
    }

    pub fn n_vertices(&self) -> usize {
        self.weights.n()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn into_weights(self) -> Matrix {
        self.weights
    }

    pub fn n_edges(&self) -> usize {
        self.weights.nnz()
    }

    /// Directed edges `(src, dst, weight)` in row-major order of `W`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights.triplets().map(|(m, n, w)| (n, m, w))
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.weights.get(dst, src) > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Neighborhood {
    pub center: usize,
    pub members: Vec<usize>,
}

impl Neighborhood {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Vertices `n` with an edge `n -> m`, in ascending order.
pub fn incoming_neighborhood(graph: &Graph, m: usize) -> Result<Neighborhood> {
    if m >= graph.n_vertices() {
        return Err(Error::invalid(format!(
            "vertex {m} out of range for a graph with {} vertices",
            graph.n_vertices()
        )));
    }
    Ok(Neighborhood {
        center: m,
        members: graph.weights().row(m).map(|(n, _)| n).collect(),
    })
}

/// Vertex positions in a local Cartesian frame, in kilometres.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexGeometry {
    points: Vec<[f64; 3]>,
}

/// One row of a geometry file: degrees of latitude/longitude and altitude in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl VertexGeometry {
    pub fn from_cartesian(points: Vec<[f64; 3]>) -> Result<VertexGeometry> {
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(VertexGeometry { points })
    }

    /// Equirectangular projection about the mean latitude of the field.
    /// Latitude and longitude in degrees, altitude in metres; output in kilometres.
    pub fn from_geographic(points: &[GeoPoint]) -> Result<VertexGeometry> {
        if points.is_empty() {
            return VertexGeometry::from_cartesian(Vec::new());
        }
        for (i, p) in points.iter().enumerate() {
            if !(-90.0..=90.0).contains(&p.lat) || !(-180.0..=180.0).contains(&p.lon) || !p.alt.is_finite() {
                return Err(Error::invalid(format!("vertex {i}: coordinates out of range {p:?}")));
            }
        }
        let mean_lat = points.iter().map(|p| p.lat).sum::<f64>() / points.len() as f64;
        let cos_lat = mean_lat.to_radians().cos();
        let projected = points
            .iter()
            .map(|p| {
                [
                    EARTH_RADIUS_KM * p.lon.to_radians() * cos_lat,
                    EARTH_RADIUS_KM * p.lat.to_radians(),
                    p.alt / 1000.0,
                ]
            })
            .collect();
        VertexGeometry::from_cartesian(projected)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn distance(&self, m: usize, n: usize) -> f64 {
        let (a, b) = (self.points[m], self.points[n]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SelfLoops {
    /// `W[m][m] = 1`, the kernel value at distance zero.
    #[default]
    Include,
    Exclude,
}

/// Gaussian distance kernel `W[m][n] = exp(-(r_mn / scale)^2)`, with entries
/// strictly below `threshold` pruned to zero.
pub fn build_weight_matrix(
    geometry: &VertexGeometry,
    scale: f64,
    threshold: f64,
    self_loops: SelfLoops,
) -> Result<Graph> {
    let n = geometry.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 vertices, got {n}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("kernel scale must be positive, got {scale}")));
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let mut triplets = Vec::new();
    for m in 0..n {
        for k in 0..n {
            if m == k {
                if self_loops == SelfLoops::Include {
                    triplets.push((m, m, 1.0));
                }
                continue;
            }
            let r = geometry.distance(m, k);
            if r == 0.0 && m < k {
                log::warn!("vertices {m} and {k} share coordinates; edge weight set to 1");
            }
            let w = (-(r / scale).powi(2)).exp();
            if w > 0.0 && w >= threshold {
                triplets.push((m, k, w));
            }
        }
    }
    Graph::from_weights(Matrix::from_triplets(n, triplets, Storage::auto(n))?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    pub n: usize,
    pub nnz: usize,
    pub zero_rows: Vec<usize>,
    pub zero_cols: Vec<usize>,
    pub negative_entries: usize,
    pub symmetric: bool,
    pub min_positive: Option<f64>,
    pub max_entry: Option<f64>,
    pub min_in_degree: usize,
    pub max_in_degree: usize,
    pub issues: Vec<String>,
}

impl WeightDiagnostics {
    pub fn balanceable(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Sanity report on a raw weight matrix before balancing.
pub fn validate_weights(w: &Matrix) -> WeightDiagnostics {
    let n = w.n();
    let mut row_pos = vec![0usize; n];
    let mut col_pos = vec![false; n];
    let mut negative = 0;
    let mut min_positive: Option<f64> = None;
    let mut max_entry: Option<f64> = None;
    for (i, j, v) in w.triplets() {
        max_entry = Some(max_entry.map_or(v, |m: f64| m.max(v)));
        if v < 0.0 || v.is_nan() {
            negative += 1;
        } else {
            row_pos[i] += 1;
            col_pos[j] = true;
            min_positive = Some(min_positive.map_or(v, |m: f64| m.min(v)));
        }
    }
    let zero_rows: Vec<usize> = (0..n).filter(|&i| row_pos[i] == 0).collect();
    let zero_cols: Vec<usize> = (0..n).filter(|&j| !col_pos[j]).collect();
    let mut issues = Vec::new();
    if !zero_rows.is_empty() {
        issues.push(format!("unbalanceable: empty row {:?}", zero_rows));
    }
    if !zero_cols.is_empty() {
        issues.push(format!("unbalanceable: empty column {:?}", zero_cols));
    }
    if negative > 0 {
        issues.push(format!("{negative} negative entries"));
    }
    WeightDiagnostics {
        n,
        nnz: w.nnz(),
        zero_rows,
        zero_cols,
        negative_entries: negative,
        symmetric: w.is_symmetric(0.0),
        min_positive,
        max_entry,
        min_in_degree: row_pos.iter().copied().min().unwrap_or(0),
        max_in_degree: row_pos.iter().copied().max().unwrap_or(0),
        issues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> VertexGeometry {
        VertexGeometry::from_cartesian(xs.iter().map(|&x| [x, 0.0, 0.0]).collect()).unwrap()
    }

    #[test]
    fn coincident_vertices_get_unit_weight() {
        let g = build_weight_matrix(&line(&[0.0, 0.0]), 1.0, 0.0, SelfLoops::Exclude).unwrap();
        assert_eq!(g.weights().get(0, 1), 1.0);
        assert_eq!(g.weights().get(1, 0), 1.0);
    }

    #[test]
    fn unit_distance_kernel() {
        let g = build_weight_matrix(&line(&[0.0, 1.0]), 1.0, 0.0, SelfLoops::Exclude).unwrap();
        let expected = (-1.0f64).exp();
        assert!((g.weights().get(0, 1) - expected).abs() < 1e-15);
        assert!((g.weights().get(0, 1) - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn threshold_prunes_far_edge() {
        let g = build_weight_matrix(&line(&[0.0, 1.0, 2.0]), 1.0, (-2.0f64).exp(), SelfLoops::Exclude).unwrap();
        assert_eq!(g.weights().get(0, 2), 0.0);
        assert_eq!(g.weights().get(2, 0), 0.0);
        assert!(g.weights().get(0, 1) > 0.0);
        assert!(g.weights().get(1, 2) > 0.0);
        assert_eq!(g.n_edges(), 4);
    }

    #[test]
    fn self_loop_policy() {
        let geo = line(&[0.0, 1.0, 5.0]);
        let with = build_weight_matrix(&geo, 1.0, 0.0, SelfLoops::Include).unwrap();
        let without = build_weight_matrix(&geo, 1.0, 0.0, SelfLoops::Exclude).unwrap();
        assert_eq!(with.weights().get(2, 2), 1.0);
        assert_eq!(without.weights().get(2, 2), 0.0);
    }

    #[test]
    fn bad_parameters() {
        let geo = line(&[0.0, 1.0]);
        assert!(matches!(
            build_weight_matrix(&geo, 0.0, 0.0, SelfLoops::Include),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build_weight_matrix(&geo, -1.0, 0.0, SelfLoops::Include).is_err());
        assert!(build_weight_matrix(&line(&[0.0]), 1.0, 0.0, SelfLoops::Include).is_err());
    }

    #[test]
    fn neighborhoods() {
        let single = Graph::from_edges(3, [(1, 2, 1.0)]).unwrap();
        let nb = incoming_neighborhood(&single, 2).unwrap();
        assert_eq!(nb.members, vec![1]);
        assert_eq!(nb.size(), 1);

        let complete = Graph::from_edges(4, (0..4).flat_map(|a| (0..4).map(move |b| (a, b, 1.0)))).unwrap();
        for m in 0..4 {
            assert_eq!(incoming_neighborhood(&complete, m).unwrap().size(), 4);
        }

        let chain = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(incoming_neighborhood(&chain, 0).unwrap().size(), 0);
        assert!(matches!(
            incoming_neighborhood(&chain, 3),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn neighborhood_sizes_sum_to_edges() {
        let g = Graph::from_edges(5, [(0, 1, 1.0), (2, 1, 0.5), (4, 3, 2.0), (3, 3, 1.0), (1, 0, 0.1)]).unwrap();
        let total: usize = (0..5).map(|m| incoming_neighborhood(&g, m).unwrap().size()).sum();
        assert_eq!(total, g.n_edges());
        assert!(g.has_edge(2, 1));
        assert!(!g.has_edge(1, 2));
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(Graph::from_edges(2, [(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn diagnostics() {
        let ones = Matrix::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        let d = validate_weights(&ones);
        assert!(d.balanceable());
        assert!(d.symmetric);
        assert!(d.zero_rows.is_empty() && d.zero_cols.is_empty());

        let zero_col = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let d = validate_weights(&zero_col);
        assert_eq!(d.zero_cols, vec![1]);
        assert!(d.issues.iter().any(|s| s.starts_with("unbalanceable: empty column")));

        let upper = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        assert!(!validate_weights(&upper).symmetric);

        let neg = Matrix::from_rows(&[vec![1.0, -2.0], vec![1.0, 3.0]]).unwrap();
        let d = validate_weights(&neg);
        assert_eq!(d.negative_entries, 1);
        assert!(!d.balanceable());
    }

    #[test]
    fn projection_distances() {
        let pts = [
            GeoPoint {
                lat: 45.0,
                lon: 10.0,
                alt: 0.0,
            },
            GeoPoint {
                lat: 45.0,
                lon: 10.0,
                alt: 1000.0,
            },
            GeoPoint {
                lat: 46.0,
                lon: 10.0,
                alt: 0.0,
            },
        ];
        let geo = VertexGeometry::from_geographic(&pts).unwrap();
        assert!((geo.distance(0, 1) - 1.0).abs() < 1e-9);
        let deg_km = EARTH_RADIUS_KM * 1f64.to_radians();
        assert!((geo.distance(0, 2) - deg_km).abs() < 1e-9);
        assert_eq!(geo.distance(0, 2), geo.distance(2, 0));
        assert_eq!(geo.distance(1, 1), 0.0);
    }
}
