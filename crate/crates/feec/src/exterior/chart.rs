//! Affine geometry of a single simplex: barycentric coordinates, their
//! gradients within the affine hull, and measure data.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::mesh::{simplex_volume, SimplexId, SimplicialComplex};

/// Geometry of a d-simplex embedded in ℝ^N, d ≤ N.
#[derive(Clone, Debug)]
pub struct Chart {
    /// Vertex coordinates (d+1 points).
    pub points: Vec<DVector<f64>>,
    /// Gradients of λ_0..λ_d as vectors in the affine hull.
    pub grads: Vec<DVector<f64>>,
    pub volume: f64,
    pub diameter: f64,
    /// Sign of the fixed orientation relative to ascending vertex order.
    pub orientation_sign: i8,
    /// Identity of the simplex within its complex, when it has one.
    pub simplex: Option<SimplexId>,
}

impl Chart {
    pub fn new(points: Vec<Vec<f64>>, orientation_sign: i8) -> Arc<Chart> {
        let pts: Vec<DVector<f64>> = points
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect();
        let d = pts.len() - 1;
        let ambient = pts[0].len();
        let mut grads = vec![DVector::zeros(ambient); d + 1];
        if d > 0 {
            let e = DMatrix::from_fn(ambient, d, |i, j| pts[j + 1][i] - pts[0][i]);
            let gram = e.transpose() * &e;
            let inv = gram
                .try_inverse()
                .expect("chart vertices must be affinely independent");
            // Columns of E (EᵀE)⁻¹ are the gradients of λ_1..λ_d.
            let g = e * inv;
            for j in 0..d {
                grads[j + 1] = g.column(j).into_owned();
            }
            let mut g0 = DVector::zeros(ambient);
            for j in 1..=d {
                g0 -= &grads[j];
            }
            grads[0] = g0;
        }
        let volume = simplex_volume(&points);
        let mut diameter: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                diameter = diameter.max((&pts[i] - &pts[j]).norm());
            }
        }
        Arc::new(Chart {
            points: pts,
            grads,
            volume,
            diameter,
            orientation_sign,
            simplex: None,
        })
    }

    /// Chart of a simplex of a complex, carrying the mesh orientation sign.
    pub fn of_simplex(complex: &SimplicialComplex, s: SimplexId) -> Arc<Chart> {
        let sx = complex.simplex(s);
        let chart = Chart::new(complex.coords_of(s), sx.orientation_sign);
        let mut inner = (*chart).clone();
        inner.simplex = Some(s);
        Arc::new(inner)
    }

    /// The reference d-simplex spanned by the origin and the unit vectors.
    pub fn reference(d: usize) -> Arc<Chart> {
        let mut points = vec![vec![0.0; d.max(1)]];
        if d == 0 {
            return Chart::new(points, 1);
        }
        for i in 0..d {
            let mut p = vec![0.0; d];
            p[i] = 1.0;
            points.push(p);
        }
        Chart::new(points, 1)
    }

    pub fn dim(&self) -> usize {
        self.points.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn barycenter(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.ambient_dim());
        for p in &self.points {
            c += p;
        }
        c / (self.points.len() as f64)
    }

    /// Cartesian point of given barycentric coordinates.
    pub fn point(&self, bary: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.ambient_dim());
        for (b, p) in bary.iter().zip(&self.points) {
            x += *b * p;
        }
        x
    }

    /// Barycentric coordinates of a point in the affine hull.
    pub fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let d = self.dim();
        let mut bary = vec![0.0; d + 1];
        let diff = &xv - &self.points[0];
        for i in 1..=d {
            bary[i] = self.grads[i].dot(&diff);
        }
        bary[0] = 1.0 - bary[1..].iter().sum::<f64>();
        bary
    }

    /// Edge vectors p_i − p_0, the basis dual to (dλ_1, …, dλ_d).
    pub fn edge_vectors(&self) -> Vec<DVector<f64>> {
        (1..=self.dim())
            .map(|i| &self.points[i] - &self.points[0])
            .collect()
    }

    /// Incenter and inradius (largest inscribed ball) of a full-dimensional
    /// simplex: the facet-volume weighted vertex average.
    pub fn inscribed_ball(&self) -> (DVector<f64>, f64) {
        let d = self.dim();
        assert_eq!(d, self.ambient_dim(), "inscribed ball needs a full-dim cell");
        let mut weights = Vec::with_capacity(d + 1);
        for opposite in 0..=d {
            let face: Vec<Vec<f64>> = self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != opposite)
                .map(|(_, p)| p.iter().copied().collect())
                .collect();
            weights.push(simplex_volume(&face));
        }
        let total: f64 = weights.iter().sum();
        let mut c = DVector::zeros(self.ambient_dim());
        for (w, p) in weights.iter().zip(&self.points) {
            c += *w * p;
        }
        c /= total;
        let radius = (d as f64) * self.volume / total;
        (c, radius)
    }
}
