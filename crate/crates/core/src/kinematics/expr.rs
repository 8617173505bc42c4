use nalgebra::{SMatrix, SVector, Vector2};

/// `e(theta)` and its left normal.
#[inline]
pub(crate) fn unit(theta: f64) -> (Vector2<f64>, Vector2<f64>) {
    let (s, c) = theta.sin_cos();
    (Vector2::new(c, s), Vector2::new(-s, c))
}

/// One chain link of a planar point: `(fixed + q[length]) * e(q[angle] + offset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub angle: usize,
    pub offset: f64,
    pub fixed: f64,
    pub length: Option<usize>,
}

impl Term {
    pub fn new(angle: usize, offset: f64, fixed: f64, length: Option<usize>) -> Self {
        Self { angle, offset, fixed, length }
    }

    pub fn fixed(angle: usize, offset: f64, fixed: f64) -> Self {
        Self::new(angle, offset, fixed, None)
    }

    #[inline]
    pub fn len(&self, q: &SVector<f64, 12>) -> f64 {
        self.fixed + self.length.map_or(0.0, |i| q[i])
    }

    #[inline]
    pub fn len_rate(&self, qd: &SVector<f64, 12>) -> f64 {
        self.length.map_or(0.0, |i| qd[i])
    }

    #[inline]
    pub fn heading(&self, q: &SVector<f64, 12>) -> f64 {
        q[self.angle] + self.offset
    }
}

/// Planar point expressed as a serial chain of [`Term`]s from a fixed origin.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PointExpr {
    pub origin: Vector2<f64>,
    pub terms: Vec<Term>,
}

impl PointExpr {
    pub fn new(origin: Vector2<f64>, terms: Vec<Term>) -> Self {
        Self { origin, terms }
    }

    pub fn last(&self) -> &Term {
        self.terms.last().expect("point expression has no terms")
    }

    pub fn last_angle(&self) -> usize {
        self.last().angle
    }

    fn sum(&self, q: &SVector<f64, 12>, n: usize) -> Vector2<f64> {
        self.terms[..n].iter().fold(self.origin, |p, t| p + t.len(q) * unit(t.heading(q)).0)
    }

    pub fn position(&self, q: &SVector<f64, 12>) -> Vector2<f64> {
        self.sum(q, self.terms.len())
    }

    pub fn position_without_last(&self, q: &SVector<f64, 12>) -> Vector2<f64> {
        self.sum(q, self.terms.len() - 1)
    }

    pub fn jacobian(&self, q: &SVector<f64, 12>) -> SMatrix<f64, 2, 12> {
        let mut j = SMatrix::<f64, 2, 12>::zeros();
        for t in &self.terms {
            let (e, n) = unit(t.heading(q));
            let mut col = j.column_mut(t.angle);
            col += t.len(q) * n;
            if let Some(i) = t.length {
                let mut col = j.column_mut(i);
                col += e;
            }
        }
        j
    }

    pub fn velocity(&self, q: &SVector<f64, 12>, qd: &SVector<f64, 12>) -> Vector2<f64> {
        self.jacobian(q) * qd
    }

    /// `J'(q, qd) qd`: the acceleration at zero coordinate acceleration.
    pub fn bias(&self, q: &SVector<f64, 12>, qd: &SVector<f64, 12>) -> Vector2<f64> {
        self.terms.iter().fold(Vector2::zeros(), |acc, t| {
            let (e, n) = unit(t.heading(q));
            let w = qd[t.angle];
            acc + 2.0 * t.len_rate(qd) * w * n - t.len(q) * w * w * e
        })
    }
}
