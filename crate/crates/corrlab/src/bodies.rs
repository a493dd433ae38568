//! Centered symmetric convex bodies: membership oracles, closed-form support
//! functions where available, and the affine operations (scale, rotate,
//! intersect, Minkowski sum) used by the inequality checks.
//!
//! Bodies are immutable values; derived bodies hold their inner bodies by
//! reference counting so checks can create thousands of transient views.
//! Boundary points count as inside (closed sets).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthogonal::OrthogonalMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A centered symmetric convex body.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    /// `{x : |<x,u>| <= s}` for a unit vector `u`.
    Slab { direction: Vec<f64>, halfwidth: f64 },
    /// `{x : |x_i| <= w_i for all i}`.
    AxisBox { halfwidths: Vec<f64> },
    /// Euclidean ball of the given radius (dimension-agnostic).
    Ball { radius: f64 },
    /// `{x : sum <row_i, x>^2 / r_i^2 <= 1}`.
    Ellipsoid {
        radii: Vec<f64>,
        orientation: OrthogonalMatrix,
    },
    /// `{x : |<a_i, x>| <= 1 for all rows a_i}`.
    SymPolytope { rows: Vec<Vec<f64>> },
    Intersection { parts: Vec<Arc<Body>> },
    Scaled { factor: f64, inner: Arc<Body> },
    /// Membership only through support functions; see [`minkowski_contains`].
    MinkowskiSum { a: Arc<Body>, b: Arc<Body> },
}

impl Body {
    pub fn slab(direction: Vec<f64>, halfwidth: f64) -> Result<Body> {
        if halfwidth <= 0.0 {
            return Err(Error::contract("slab halfwidth must be positive"));
        }
        let n = norm(&direction);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::contract("slab direction must be a nonzero vector"));
        }
        let direction = direction.iter().map(|x| x / n).collect();
        Ok(Body::Slab {
            direction,
            halfwidth,
        })
    }

    pub fn axis_box(halfwidths: Vec<f64>) -> Result<Body> {
        if halfwidths.is_empty() || halfwidths.iter().any(|w| *w <= 0.0) {
            return Err(Error::contract("box halfwidths must be positive"));
        }
        Ok(Body::AxisBox { halfwidths })
    }

    pub fn ball(radius: f64) -> Result<Body> {
        if radius <= 0.0 {
            return Err(Error::contract("ball radius must be positive"));
        }
        Ok(Body::Ball { radius })
    }

    pub fn ellipsoid(radii: Vec<f64>, orientation: OrthogonalMatrix) -> Result<Body> {
        if radii.is_empty() || radii.iter().any(|r| *r <= 0.0) {
            return Err(Error::contract("ellipsoid radii must be positive"));
        }
        if orientation.dim() != radii.len() {
            return Err(Error::DimensionMismatch {
                context: "ellipsoid orientation",
                expected: radii.len(),
                got: orientation.dim(),
            });
        }
        Ok(Body::Ellipsoid { radii, orientation })
    }

    pub fn axis_ellipsoid(radii: Vec<f64>) -> Result<Body> {
        let n = radii.len();
        Body::ellipsoid(radii, OrthogonalMatrix::identity(n))
    }

    /// Ellipsoid `{x : x^T M x <= 1}` from a symmetric positive-definite matrix.
    ///
    /// The eigendecomposition is made reproducible: eigenvalues sorted
    /// descending (radii ascending) and each eigenvector's first nonzero
    /// component made positive.
    pub fn ellipsoid_from_quadratic_form(m: &DMatrix<f64>) -> Result<Body> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::contract("quadratic form must be square"));
        }
        let sym_defect = (m - m.transpose()).abs().max();
        if sym_defect > 1e-10 {
            return Err(Error::contract("quadratic form must be symmetric"));
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut radii = Vec::with_capacity(n);
        let mut rows = DMatrix::zeros(n, n);
        for (slot, &idx) in order.iter().enumerate() {
            let lam = eig.eigenvalues[idx];
            if lam <= 0.0 {
                return Err(Error::NotNonnegDefinite(lam));
            }
            radii.push(1.0 / lam.sqrt());
            let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            let sign = v
                .iter()
                .find(|x| x.abs() > 1e-14)
                .map(|x| x.signum())
                .unwrap_or(1.0);
            for x in v.iter_mut() {
                *x *= sign;
            }
            for j in 0..n {
                rows[(slot, j)] = v[j];
            }
        }
        let orientation = OrthogonalMatrix::new(rows)?;
        Body::ellipsoid(radii, orientation)
    }

    pub fn sym_polytope(rows: Vec<Vec<f64>>) -> Result<Body> {
        if rows.is_empty() {
            return Err(Error::contract("polytope needs at least one row"));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::contract("polytope rows must share a dimension"));
        }
        Ok(Body::SymPolytope { rows })
    }

    pub fn intersection(parts: Vec<Body>) -> Result<Body> {
        if parts.is_empty() {
            return Err(Error::contract("intersection needs at least one part"));
        }
        let mut dim: Option<usize> = None;
        for p in &parts {
            if let Some(d) = p.dimension() {
                match dim {
                    None => dim = Some(d),
                    Some(e) if e != d => {
                        return Err(Error::DimensionMismatch {
                            context: "intersection parts",
                            expected: e,
                            got: d,
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(Body::Intersection {
            parts: parts.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn minkowski_sum(a: Body, b: Body) -> Result<Body> {
        if let (Some(da), Some(db)) = (a.dimension(), b.dimension()) {
            if da != db {
                return Err(Error::DimensionMismatch {
                    context: "minkowski summands",
                    expected: da,
                    got: db,
                });
            }
        }
        Ok(Body::MinkowskiSum {
            a: Arc::new(a),
            b: Arc::new(b),
        })
    }

    /// Intrinsic dimension, `None` when the body is dimension-agnostic (Ball).
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Body::Slab { direction, .. } => Some(direction.len()),
            Body::AxisBox { halfwidths } => Some(halfwidths.len()),
            Body::Ball { .. } => None,
            Body::Ellipsoid { radii, .. } => Some(radii.len()),
            Body::SymPolytope { rows } => Some(rows[0].len()),
            Body::Intersection { parts } => parts.iter().find_map(|p| p.dimension()),
            Body::Scaled { inner, .. } => inner.dimension(),
            Body::MinkowskiSum { a, b } => a.dimension().or(b.dimension()),
        }
    }

    fn variant_name(&self) -> &'static str {
        match self {
            Body::Slab { .. } => "slab",
            Body::AxisBox { .. } => "axis_box",
            Body::Ball { .. } => "ball",
            Body::Ellipsoid { .. } => "ellipsoid",
            Body::SymPolytope { .. } => "sym_polytope",
            Body::Intersection { .. } => "intersection",
            Body::Scaled { .. } => "scaled",
            Body::MinkowskiSum { .. } => "minkowski_sum",
        }
    }

    /// Checked membership oracle for the closed set.
    ///
    /// Minkowski sums are admitted only when they reduce exactly
    /// (Ball+Ball, AxisBox+AxisBox); otherwise use [`minkowski_contains`]
    /// with an explicit direction set.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if let Some(d) = self.dimension() {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    context: "contains",
                    expected: d,
                    got: x.len(),
                });
            }
        }
        Ok(self.compiled(x.len())?.eval(x))
    }

    /// Precompiled membership for tight estimator loops: dimension checks and
    /// Minkowski reductions happen once, evaluation is infallible.
    pub fn compiled(&self, dim: usize) -> Result<CompiledBody> {
        if let Some(d) = self.dimension() {
            if d != dim {
                return Err(Error::DimensionMismatch {
                    context: "compiled body",
                    expected: d,
                    got: dim,
                });
            }
        }
        let node = compile(self, dim)?;
        Ok(CompiledBody { node, dim })
    }

    /// Scaled copy: `contains(scale(B,c), x) <=> contains(B, x/c)`.
    pub fn scale(&self, c: f64) -> Result<Body> {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::contract("scale factor must be positive"));
        }
        Ok(match self {
            Body::Ball { radius } => Body::Ball { radius: radius * c },
            Body::AxisBox { halfwidths } => Body::AxisBox {
                halfwidths: halfwidths.iter().map(|w| w * c).collect(),
            },
            Body::Slab {
                direction,
                halfwidth,
            } => Body::Slab {
                direction: direction.clone(),
                halfwidth: halfwidth * c,
            },
            Body::Ellipsoid { radii, orientation } => Body::Ellipsoid {
                radii: radii.iter().map(|r| r * c).collect(),
                orientation: orientation.clone(),
            },
            Body::Scaled { factor, inner } => Body::Scaled {
                factor: factor * c,
                inner: inner.clone(),
            },
            other => Body::Scaled {
                factor: c,
                inner: Arc::new(other.clone()),
            },
        })
    }

    /// Rotated copy: `contains(rotate(B,U), x) <=> contains(B, U^T x)`.
    pub fn rotate(&self, u: &OrthogonalMatrix) -> Result<Body> {
        if let Some(d) = self.dimension() {
            if d != u.dim() {
                return Err(Error::DimensionMismatch {
                    context: "rotate",
                    expected: d,
                    got: u.dim(),
                });
            }
        }
        Ok(match self {
            Body::Ball { radius } => Body::Ball { radius: *radius },
            Body::Slab {
                direction,
                halfwidth,
            } => Body::Slab {
                direction: u.apply(direction),
                halfwidth: *halfwidth,
            },
            Body::Ellipsoid { radii, orientation } => Body::Ellipsoid {
                radii: radii.clone(),
                // rows' = O U^T so that <row_i', x> = <row_i, U^T x>
                orientation: orientation.compose(&u.transpose()),
            },
            Body::SymPolytope { rows } => Body::SymPolytope {
                rows: rows.iter().map(|a| u.apply(a)).collect(),
            },
            Body::AxisBox { halfwidths } => {
                // A rotated box leaves the axis-aligned family; express it as
                // a polytope with rows U e_i / w_i.
                let n = halfwidths.len();
                let rows = (0..n)
                    .map(|i| u.column(i).iter().map(|v| v / halfwidths[i]).collect())
                    .collect();
                Body::SymPolytope { rows }
            }
            Body::Intersection { parts } => Body::Intersection {
                parts: parts
                    .iter()
                    .map(|p| p.rotate(u).map(Arc::new))
                    .collect::<Result<_>>()?,
            },
            Body::Scaled { factor, inner } => Body::Scaled {
                factor: *factor,
                inner: Arc::new(inner.rotate(u)?),
            },
            Body::MinkowskiSum { a, b } => Body::MinkowskiSum {
                a: Arc::new(a.rotate(u)?),
                b: Arc::new(b.rotate(u)?),
            },
        })
    }

    /// Support function `h_B(u) = sup{<x,u> : x in B}`.
    ///
    /// Slabs are unbounded: the support is `+inf` unless `u` is parallel to
    /// the slab direction. Intersections and polytopes have no closed form.
    pub fn support(&self, u: &[f64]) -> Result<f64> {
        match self {
            Body::Ball { radius } => Ok(radius * norm(u)),
            Body::AxisBox { halfwidths } => {
                check_dim("support", halfwidths.len(), u.len())?;
                Ok(halfwidths.iter().zip(u).map(|(w, ui)| w * ui.abs()).sum())
            }
            Body::Slab {
                direction,
                halfwidth,
            } => {
                check_dim("support", direction.len(), u.len())?;
                let along = dot(direction, u);
                let perp_sq = dot(u, u) - along * along;
                if perp_sq > 1e-24 * dot(u, u) {
                    Ok(f64::INFINITY)
                } else {
                    Ok(halfwidth * along.abs())
                }
            }
            Body::Ellipsoid { radii, orientation } => {
                check_dim("support", radii.len(), u.len())?;
                let proj = orientation.apply(u);
                Ok(radii
                    .iter()
                    .zip(&proj)
                    .map(|(r, p)| (r * p) * (r * p))
                    .sum::<f64>()
                    .sqrt())
            }
            Body::Scaled { factor, inner } => Ok(factor * inner.support(u)?),
            Body::MinkowskiSum { a, b } => Ok(a.support(u)? + b.support(u)?),
            Body::Intersection { .. } => Err(Error::NoClosedFormSupport("intersection")),
            Body::SymPolytope { .. } => Err(Error::NoClosedFormSupport("sym_polytope")),
        }
    }

    /// Smallest known radius `r` with `body ⊆ r B`; `+inf` when unknown or
    /// unbounded (slabs, polytopes).
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Body::Ball { radius } => *radius,
            Body::AxisBox { halfwidths } => norm(halfwidths),
            Body::Slab { .. } => f64::INFINITY,
            Body::Ellipsoid { radii, .. } => radii.iter().cloned().fold(0.0, f64::max),
            Body::SymPolytope { .. } => f64::INFINITY,
            Body::Intersection { parts } => parts
                .iter()
                .map(|p| p.bounding_radius())
                .fold(f64::INFINITY, f64::min),
            Body::Scaled { factor, inner } => factor * inner.bounding_radius(),
            Body::MinkowskiSum { a, b } => a.bounding_radius() + b.bounding_radius(),
        }
    }

    /// True when `support` is available for this body.
    pub fn support_capable(&self) -> bool {
        match self {
            Body::Ball { .. } | Body::AxisBox { .. } | Body::Slab { .. } | Body::Ellipsoid { .. } => {
                true
            }
            Body::Scaled { inner, .. } => inner.support_capable(),
            Body::MinkowskiSum { a, b } => a.support_capable() && b.support_capable(),
            _ => false,
        }
    }

    /// Exact reduction of a Minkowski sum when the summands allow it:
    /// Ball+Ball and AxisBox+AxisBox (through Scaled wrappers).
    pub fn exact_minkowski_reduction(&self) -> Option<Body> {
        if let Body::MinkowskiSum { a, b } = self {
            match (a.unwrap_scaled(), b.unwrap_scaled()) {
                (Body::Ball { radius: ra }, Body::Ball { radius: rb }) => {
                    Some(Body::Ball { radius: ra + rb })
                }
                (Body::AxisBox { halfwidths: wa }, Body::AxisBox { halfwidths: wb })
                    if wa.len() == wb.len() =>
                {
                    Some(Body::AxisBox {
                        halfwidths: wa.iter().zip(&wb).map(|(x, y)| x + y).collect(),
                    })
                }
                _ => None,
            }
        } else {
            None
        }
    }

    /// Push Scaled wrappers into scalable payloads (Ball, AxisBox, ...).
    fn unwrap_scaled(&self) -> Body {
        match self {
            Body::Scaled { factor, inner } => match inner.scale(*factor) {
                Ok(Body::Scaled { factor, inner }) => Body::Scaled { factor, inner },
                Ok(other) => other.unwrap_scaled(),
                Err(_) => self.clone(),
            },
            other => other.clone(),
        }
    }
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

/// Membership for a Minkowski sum through supplied support directions.
///
/// Returns true iff `<x,u> <= h_a(u) + h_b(u)` for every supplied direction.
/// This is an outer approximation: rejection is certified, acceptance may be
/// spurious unless the direction set contains all active normals (axis
/// directions for AxisBox+AxisBox, `x/|x|` for Ball+Ball).
pub fn minkowski_contains(sum: &Body, x: &[f64], directions: &[Vec<f64>]) -> Result<bool> {
    let Body::MinkowskiSum { a, b } = sum else {
        return Err(Error::contract("minkowski_contains needs a MinkowskiSum"));
    };
    if directions.is_empty() {
        return Err(Error::contract("direction set must be nonempty"));
    }
    if !a.support_capable() {
        return Err(Error::MinkowskiUnsupported(a.variant_name()));
    }
    if !b.support_capable() {
        return Err(Error::MinkowskiUnsupported(b.variant_name()));
    }
    for u in directions {
        check_dim("minkowski_contains", x.len(), u.len())?;
        if dot(x, u) > a.support(u)? + b.support(u)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Compiled membership
// ---------------------------------------------------------------------------

enum Node {
    Slab {
        direction: Vec<f64>,
        halfwidth: f64,
    },
    AxisBox {
        halfwidths: Vec<f64>,
    },
    BallSq {
        radius_sq: f64,
    },
    Ellipsoid {
        inv_radii_sq: Vec<f64>,
        rows: Vec<f64>, // row-major n*n
        n: usize,
    },
    Polytope {
        rows: Vec<f64>, // row-major k*n
        k: usize,
        n: usize,
    },
    All {
        parts: Vec<Node>,
    },
    Scaled {
        inv_factor: f64,
        inner: Box<Node>,
    },
}

/// Validated, allocation-free membership evaluator.
pub struct CompiledBody {
    node: Node,
    dim: usize,
}

impl CompiledBody {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        eval_node(&self.node, x, 1.0)
    }
}

fn compile(body: &Body, dim: usize) -> Result<Node> {
    Ok(match body {
        Body::Slab {
            direction,
            halfwidth,
        } => Node::Slab {
            direction: direction.clone(),
            halfwidth: *halfwidth,
        },
        Body::AxisBox { halfwidths } => Node::AxisBox {
            halfwidths: halfwidths.clone(),
        },
        Body::Ball { radius } => Node::BallSq {
            radius_sq: radius * radius,
        },
        Body::Ellipsoid { radii, orientation } => Node::Ellipsoid {
            inv_radii_sq: radii.iter().map(|r| 1.0 / (r * r)).collect(),
            rows: orientation.to_flat_row_major(),
            n: radii.len(),
        },
        Body::SymPolytope { rows } => Node::Polytope {
            rows: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            k: rows.len(),
            n: rows[0].len(),
        },
        Body::Intersection { parts } => Node::All {
            parts: parts
                .iter()
                .map(|p| compile(p, dim))
                .collect::<Result<_>>()?,
        },
        Body::Scaled { factor, inner } => Node::Scaled {
            inv_factor: 1.0 / factor,
            inner: Box::new(compile(inner, dim)?),
        },
        Body::MinkowskiSum { .. } => match body.exact_minkowski_reduction() {
            Some(reduced) => compile(&reduced, dim)?,
            None => return Err(Error::MinkowskiUnsupported(body.variant_name())),
        },
    })
}

/// Evaluate membership of `scale * x` in the node.
fn eval_node(node: &Node, x: &[f64], scale: f64) -> bool {
    match node {
        Node::Slab {
            direction,
            halfwidth,
        } => (scale * dot(direction, x)).abs() <= *halfwidth,
        Node::AxisBox { halfwidths } => x
            .iter()
            .zip(halfwidths)
            .all(|(xi, w)| (scale * xi).abs() <= *w),
        Node::BallSq { radius_sq } => scale * scale * dot(x, x) <= *radius_sq,
        Node::Ellipsoid {
            inv_radii_sq,
            rows,
            n,
        } => {
            let mut q = 0.0;
            for i in 0..*n {
                let row = &rows[i * n..(i + 1) * n];
                let p = dot(row, x) * scale;
                q += p * p * inv_radii_sq[i];
            }
            q <= 1.0
        }
        Node::Polytope { rows, k, n } => (0..*k).all(|i| {
            let row = &rows[i * n..(i + 1) * n];
            (scale * dot(row, x)).abs() <= 1.0
        }),
        Node::All { parts } => parts.iter().all(|p| eval_node(p, x, scale)),
        Node::Scaled { inv_factor, inner } => eval_node(inner, x, scale * inv_factor),
    }
}
