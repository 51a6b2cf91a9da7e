use crate::atom::{build_hamiltonian, build_jump_operators, AtomModel, JumpOperator, LaserField, N_LEVELS};
use crate::error::Result;
use crate::{Mat8, C64};
use nalgebra::DMatrix;

/// Lindblad generator with the drive split into its two laser parts:
/// H(t) = H₀ + s_blue(t)·H_blue + s_ir(t)·H_ir.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub h0: Mat8,
    pub h_blue: Mat8,
    pub h_ir: Mat8,
    pub jumps: Vec<JumpOperator>,
    /// Diagonal of Σ L†L.
    pub decay: [f64; N_LEVELS],
    /// Index of the blue and IR lasers in the original list, if present.
    blue_ir: (Option<usize>, Option<usize>),
}

impl Liouvillian {
    pub fn new(atom: &AtomModel, lasers: &[LaserField]) -> Result<Self> {
        atom.validate()?;
        let n = lasers.len();
        let zeros = vec![0.0; n];
        let h0 = build_hamiltonian(atom, lasers, &zeros)?;
        let unit = |which: Option<usize>| -> Result<Mat8> {
            match which {
                None => Ok(Mat8::zeros()),
                Some(i) => {
                    let mut s = zeros.clone();
                    s[i] = 1.0;
                    Ok(build_hamiltonian(atom, lasers, &s)? - h0)
                }
            }
        };
        use crate::atom::Transition;
        let blue = lasers.iter().position(|l| l.transition == Transition::Blue397);
        let ir = lasers.iter().position(|l| l.transition == Transition::Ir866);
        let jumps = build_jump_operators(atom);
        let mut decay = [0.0; N_LEVELS];
        for j in &jumps {
            decay[j.upper] += j.rate;
        }
        Ok(Self {
            h0,
            h_blue: unit(blue)?,
            h_ir: unit(ir)?,
            jumps,
            decay,
            blue_ir: (blue, ir),
        })
    }

    pub fn hamiltonian(&self, blue: f64, ir: f64) -> Mat8 {
        self.h0 + self.h_blue * C64::new(blue, 0.0) + self.h_ir * C64::new(ir, 0.0)
    }

    /// H − (i/2) Σ L†L.
    pub fn effective_hamiltonian(&self, blue: f64, ir: f64) -> Mat8 {
        let mut h = self.hamiltonian(blue, ir);
        for i in 0..N_LEVELS {
            h[(i, i)] -= C64::new(0.0, 0.5 * self.decay[i]);
        }
        h
    }

    /// Scale factors per laser in the caller's laser order.
    pub fn laser_scales(&self, n_lasers: usize, blue: f64, ir: f64) -> Vec<f64> {
        let mut s = vec![0.0; n_lasers];
        if let Some(i) = self.blue_ir.0 {
            s[i] = blue;
        }
        if let Some(i) = self.blue_ir.1 {
            s[i] = ir;
        }
        s
    }

    /// The detected-channel jump operator.
    pub fn detected(&self) -> &JumpOperator {
        self.jumps.iter().find(|j| j.detected).expect("detected channel exists")
    }

    /// L(x) = −i[H, x] + Σ (L x L† − ½{L†L, x}) for an arbitrary matrix x.
    #[inline]
    pub fn apply(&self, h: &Mat8, x: &Mat8) -> Mat8 {
        let comm = h * x - x * h;
        let mut out = Mat8::from_fn(|i, j| {
            C64::new(comm[(i, j)].im, -comm[(i, j)].re) - x[(i, j)] * (0.5 * (self.decay[i] + self.decay[j]))
        });
        for jmp in &self.jumps {
            out[(jmp.lower, jmp.lower)] += x[(jmp.upper, jmp.upper)] * jmp.rate;
        }
        out
    }

    /// Row-major vectorized generator: vec(L(x)) = M · vec(x), index i·8 + j.
    pub fn superoperator(&self, blue: f64, ir: f64) -> DMatrix<C64> {
        let h = self.hamiltonian(blue, ir);
        let n2 = N_LEVELS * N_LEVELS;
        let mut m = DMatrix::zeros(n2, n2);
        for col in 0..n2 {
            let mut e = Mat8::zeros();
            e[(col / N_LEVELS, col % N_LEVELS)] = C64::new(1.0, 0.0);
            let y = self.apply(&h, &e);
            for row in 0..n2 {
                m[(row, col)] = y[(row / N_LEVELS, row % N_LEVELS)];
            }
        }
        m
    }
}

pub fn vectorize(x: &Mat8) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_fn(N_LEVELS * N_LEVELS, |k, _| x[(k / N_LEVELS, k % N_LEVELS)])
}

pub fn unvectorize(v: &nalgebra::DVector<C64>) -> Mat8 {
    Mat8::from_fn(|i, j| v[i * N_LEVELS + j])
}
