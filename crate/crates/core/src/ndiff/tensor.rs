use std::fmt::{Debug, Display};

use num_traits::Float;

use super::NdError;

/// Real scalar usable by the tape: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Float + Default + Debug + Display + std::iter::Sum + Send + Sync + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a @ b + beta * c`; `a`, `b` strided, `c` contiguous row-major `m × n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
    ) {
        if m == 0 || n == 0 {
            return;
        }
        assert!(c.len() >= m * n);
        if skinny_gemm(m, k, n, a, rsa, csa, b, rsb, csb, beta, c) {
            return;
        }
        // SAFETY: callers pass buffers sized for the stated strides; checked in Tape::matmul.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
    ) {
        if m == 0 || n == 0 {
            return;
        }
        assert!(c.len() >= m * n);
        if skinny_gemm(m, k, n, a, rsa, csa, b, rsb, csb, beta, c) {
            return;
        }
        // SAFETY: see the f32 impl.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

/// Direct loops for the skinny products that dominate single-report
/// inference, where packing a full 8-row tile wastes most of the work.
/// Returns false when the shape is left to the blocked kernel.
#[allow(clippy::too_many_arguments)]
fn skinny_gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    rsa: isize,
    csa: isize,
    b: &[T],
    rsb: isize,
    csb: isize,
    beta: T,
    c: &mut [T],
) -> bool {
    let at = |i: usize, p: usize| a[(i as isize * rsa + p as isize * csa) as usize];
    if csb == 1 && (m <= 4 || k <= 4) {
        for i in 0..m {
            let row = &mut c[i * n..(i + 1) * n];
            if beta == T::zero() {
                row.fill(T::zero());
            } else if beta != T::one() {
                row.iter_mut().for_each(|x| *x = *x * beta);
            }
            for p in 0..k {
                let s = at(i, p);
                if s == T::zero() {
                    continue;
                }
                let off = (p as isize * rsb) as usize;
                for (x, &y) in row.iter_mut().zip(&b[off..off + n]) {
                    *x = *x + s * y;
                }
            }
        }
        return true;
    }
    if rsb == 1 && csa == 1 && m <= 4 {
        for i in 0..m {
            let off_a = (i as isize * rsa) as usize;
            let ar = &a[off_a..off_a + k];
            for j in 0..n {
                let off = (j as isize * csb) as usize;
                let dot = ar.iter().zip(&b[off..off + k]).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                let prev = c[i * n + j];
                c[i * n + j] = if beta == T::zero() { dot } else { beta * prev + dot };
            }
        }
        return true;
    }
    false
}

pub(crate) fn c<T: Scalar>(v: f64) -> T {
    T::of(v)
}

/// Dense row-major tensor with at most three axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, NdError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(NdError::Rank(shape.to_vec()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NdError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, NdError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NdError::DataLength {
                    shape: vec![rows.len(), cols],
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(&[rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all axes after the first.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    /// Split the shape around `axis` into (outer, axis length, inner).
    pub(crate) fn axis_split(&self, axis: usize) -> Result<(usize, usize, usize), NdError> {
        if axis >= self.shape.len() {
            return Err(NdError::Axis {
                axis,
                shape: self.shape.clone(),
            });
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, self.shape[axis], inner))
    }
}
