//! Dense LU solve with partial pivoting.
//!
//! The discretized generator couples every node to all lower-indexed
//! nodes through the claim integral, so its rows are dense below the
//! superdiagonal; a banded solver does not apply and plain LU at the
//! grid sizes in use (hundreds to a few thousand nodes) is cheap.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularMatrix;

impl std::fmt::Display for SingularMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "singular linear system")
    }
}

impl std::error::Error for SingularMatrix {}

/// Solve `A x = b` in place: `a` is row-major `n x n` and gets factored,
/// `b` is overwritten with the solution.
pub fn lu_solve_in_place<R: Real>(
    n: usize,
    a: &mut [R],
    b: &mut [R],
) -> Result<(), SingularMatrix> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        // pivot
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].abs();
        for row in (col + 1)..n {
            let mag = a[row * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if !(pivot_mag > R::zero()) || !pivot_mag.is_finite() {
            return Err(SingularMatrix);
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor == R::zero() {
                continue;
            }
            a[row * n + col] = R::zero();
            for j in (col + 1)..n {
                let upper = a[col * n + j];
                a[row * n + j] -= factor * upper;
            }
            b[row] -= factor * b[col];
        }
    }
    // back substitution
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[row * n + j] * b[j];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(())
}
