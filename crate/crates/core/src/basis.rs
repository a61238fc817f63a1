use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// An `n × d` matrix with orthonormal columns, `0 < d < n`: a point on the
/// Grassmannian of `d`-planes in `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    cols: Mat,
}

impl Basis {
    /// Largest `‖BᵀB − I‖_F` a basis may carry before it must be
    /// re-orthonormalized.
    pub const DRIFT_BUDGET: f64 = 1e-8;

    pub fn new(cols: Mat) -> Result<Self> {
        check_shape(&cols)?;
        linalg::ensure_finite_mat(&cols)?;
        let defect = linalg::orthonormality_defect(&cols);
        if defect > Self::DRIFT_BUDGET {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(Basis { cols })
    }

    /// Orthonormal basis for the range of an arbitrary full-rank `a`.
    pub fn orthonormalized(a: &Mat) -> Result<Self> {
        check_shape(a)?;
        Ok(Basis {
            cols: linalg::orthonormalize(a)?,
        })
    }

    /// First `d` columns of the `n × n` identity.
    pub fn coordinate(n: usize, d: usize) -> Result<Self> {
        Self::new(Mat::identity(n, d))
    }

    /// Wraps columns produced by an orthogonality-preserving update.
    pub(crate) fn from_raw(cols: Mat) -> Self {
        debug_assert!(cols.ncols() > 0 && cols.ncols() < cols.nrows());
        Basis { cols }
    }

    pub fn n(&self) -> usize {
        self.cols.nrows()
    }

    pub fn d(&self) -> usize {
        self.cols.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.cols
    }

    pub fn into_matrix(self) -> Mat {
        self.cols
    }

    pub fn defect(&self) -> f64 {
        linalg::orthonormality_defect(&self.cols)
    }

    pub fn reorthonormalize(&self) -> Result<Self> {
        Ok(Basis {
            cols: linalg::orthonormalize(&self.cols)?,
        })
    }

    /// Row submatrix `[B]_Ω`; repeated indices give repeated rows.
    pub fn rows(&self, omega: &[usize]) -> Mat {
        self.cols.select_rows(omega.iter())
    }

    pub(crate) fn same_shape(&self, other: &Basis) -> Result<()> {
        if self.n() != other.n() || self.d() != other.d() {
            return Err(Error::Shape(format!(
                "bases differ in shape: {}x{} vs {}x{}",
                self.n(),
                self.d(),
                other.n(),
                other.d()
            )));
        }
        Ok(())
    }
}

fn check_shape(a: &Mat) -> Result<()> {
    let (n, d) = a.shape();
    if d == 0 || d >= n {
        return Err(Error::Shape(format!("basis needs 0 < d < n, got {n}x{d}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_square_and_non_orthonormal() {
        assert!(matches!(
            Basis::new(Mat::identity(3, 3)),
            Err(Error::Shape(_))
        ));
        let mut a = Mat::identity(4, 2);
        a[(0, 0)] = 1.1;
        assert!(matches!(Basis::new(a), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn rows_allow_repeats() {
        let b = Basis::coordinate(4, 2).unwrap();
        let sub = b.rows(&[1, 1, 3]);
        assert_eq!(sub.shape(), (3, 2));
        assert_eq!(sub[(0, 1)], 1.0);
        assert_eq!(sub[(1, 1)], 1.0);
        assert_eq!(sub[(2, 0)], 0.0);
    }
}
