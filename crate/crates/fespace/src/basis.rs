//! Local shape functions written in barycentric coordinates.
//!
//! Local dof order: vertices `0..3`, then edges `3..6` (edge `k` opposite
//! vertex `k`), then the cubic bubble.

pub const MAX_LOCAL: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalBasis {
    P1,
    P2,
    P2Bubble,
}

/// Values and barycentric partial derivatives of all local shape functions
/// at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShapeEval {
    pub values: [f64; MAX_LOCAL],
    pub dlam: [[f64; 3]; MAX_LOCAL],
}

impl ShapeEval {
    /// Physical gradient of shape function `i`.
    #[inline]
    pub fn grad(&self, i: usize, grad_lambda: &[[f64; 2]; 3]) -> [f64; 2] {
        let d = &self.dlam[i];
        [
            d[0] * grad_lambda[0][0] + d[1] * grad_lambda[1][0] + d[2] * grad_lambda[2][0],
            d[0] * grad_lambda[0][1] + d[1] * grad_lambda[1][1] + d[2] * grad_lambda[2][1],
        ]
    }
}

impl LocalBasis {
    pub fn len(self) -> usize {
        match self {
            LocalBasis::P1 => 3,
            LocalBasis::P2 => 6,
            LocalBasis::P2Bubble => 7,
        }
    }

    pub fn eval(self, lam: [f64; 3]) -> ShapeEval {
        let mut s = ShapeEval::default();
        match self {
            LocalBasis::P1 => {
                for i in 0..3 {
                    s.values[i] = lam[i];
                    s.dlam[i][i] = 1.0;
                }
            }
            LocalBasis::P2 | LocalBasis::P2Bubble => {
                for i in 0..3 {
                    s.values[i] = lam[i] * (2.0 * lam[i] - 1.0);
                    s.dlam[i][i] = 4.0 * lam[i] - 1.0;
                }
                for k in 0..3 {
                    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                    s.values[3 + k] = 4.0 * lam[a] * lam[b];
                    s.dlam[3 + k][a] = 4.0 * lam[b];
                    s.dlam[3 + k][b] = 4.0 * lam[a];
                }
                if self == LocalBasis::P2Bubble {
                    s.values[6] = 27.0 * lam[0] * lam[1] * lam[2];
                    s.dlam[6] = [27.0 * lam[1] * lam[2], 27.0 * lam[0] * lam[2], 27.0 * lam[0] * lam[1]];
                }
            }
        }
        s
    }
}
