//! Packed, unconstrained hyperparameter vector.
//!
//! Layout: `[vech(L) row-major with log-diagonal, log l_1..l_k, log(σ²_1 − floor)..]`
//! where `k = 1` in ICM mode and `k = n` in convolved mode.

use std::ops::Range;

use crate::kernels::{KernelMode, NoiseParams, SpatialParams, TaskCholeskyFactor};

use super::GpError;

/// Shape of a packed hyperparameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaLayout {
    pub n_tasks: usize,
    pub mode: KernelMode,
    pub noise_floor: f64,
}

impl ThetaLayout {
    pub fn new(n_tasks: usize, mode: KernelMode, noise_floor: f64) -> Self {
        Self {
            n_tasks,
            mode,
            noise_floor,
        }
    }

    pub fn n_lengthscales(&self) -> usize {
        match self.mode {
            KernelMode::Icm => 1,
            KernelMode::Convolved => self.n_tasks,
        }
    }

    pub fn factor_range(&self) -> Range<usize> {
        0..TaskCholeskyFactor::packed_len(self.n_tasks)
    }

    pub fn lengthscale_range(&self) -> Range<usize> {
        let start = self.factor_range().end;
        start..start + self.n_lengthscales()
    }

    pub fn noise_range(&self) -> Range<usize> {
        let start = self.lengthscale_range().end;
        start..start + self.n_tasks
    }

    pub fn dim(&self) -> usize {
        self.noise_range().end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    layout: ThetaLayout,
    values: Vec<f64>,
}

impl HyperParams {
    pub fn from_values(layout: ThetaLayout, values: Vec<f64>) -> Result<Self, GpError> {
        if values.len() != layout.dim() {
            return Err(GpError::ThetaDimension {
                expected: layout.dim(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite("hyperparameter".into()));
        }
        Ok(Self { layout, values })
    }

    /// Packs materialized parameters. In ICM mode only the first length-scale
    /// is kept. Noise variances at or below the floor are packed as
    /// `floor · (1 + 1e-6)`.
    pub fn pack(
        factor: &TaskCholeskyFactor,
        spatial: &SpatialParams,
        noise: &NoiseParams,
        mode: KernelMode,
        noise_floor: f64,
    ) -> Result<Self, GpError> {
        let n = factor.n_tasks();
        let layout = ThetaLayout::new(n, mode, noise_floor);
        let lengthscales = match mode {
            KernelMode::Icm => &spatial.lengthscales()[..1],
            KernelMode::Convolved => spatial.lengthscales(),
        };
        if lengthscales.len() != layout.n_lengthscales() || noise.variances().len() != n {
            return Err(GpError::ThetaDimension {
                expected: layout.n_lengthscales() + n,
                got: lengthscales.len() + noise.variances().len(),
            });
        }
        let mut values = factor.packed().to_vec();
        values.extend(lengthscales.iter().map(|l| l.ln()));
        values.extend(
            noise
                .variances()
                .iter()
                .map(|&v| (v - noise_floor).max(noise_floor * 1e-6).ln()),
        );
        Self::from_values(layout, values)
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn mode(&self) -> KernelMode {
        self.layout.mode
    }

    pub fn n_tasks(&self) -> usize {
        self.layout.n_tasks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn factor(&self) -> TaskCholeskyFactor {
        TaskCholeskyFactor::from_packed(self.layout.n_tasks, self.values[self.layout.factor_range()].to_vec())
            .expect("layout-sized factor")
    }

    pub fn spatial(&self) -> SpatialParams {
        let ls = self.values[self.layout.lengthscale_range()].iter().map(|v| v.exp()).collect();
        SpatialParams::new(ls).expect("exp of finite is positive")
    }

    pub fn noise(&self) -> NoiseParams {
        let floor = self.layout.noise_floor;
        NoiseParams::clamped(
            self.values[self.layout.noise_range()].iter().map(|v| floor + v.exp()).collect(),
            floor,
        )
    }

    /// Materialized `(L, lengthscales, noise)`; `unpack ∘ pack` is the identity.
    pub fn unpack(&self) -> (TaskCholeskyFactor, SpatialParams, NoiseParams) {
        (self.factor(), self.spatial(), self.noise())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn dimensions() {
        assert_eq!(ThetaLayout::new(4, KernelMode::Convolved, 1e-8).dim(), 10 + 4 + 4);
        assert_eq!(ThetaLayout::new(4, KernelMode::Icm, 1e-8).dim(), 10 + 1 + 4);
        assert_eq!(ThetaLayout::new(1, KernelMode::Icm, 1e-8).dim(), 3);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let l = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, -0.4, 0.6]);
        let factor = TaskCholeskyFactor::from_lower(&l).unwrap();
        let spatial = SpatialParams::new(vec![12.0, 70.0]).unwrap();
        let noise = NoiseParams::new(vec![0.05, 0.2]).unwrap();
        let theta = HyperParams::pack(&factor, &spatial, &noise, KernelMode::Convolved, 1e-8).unwrap();
        let (f2, s2, n2) = theta.unpack();
        assert!((f2.lower() - l).abs().max() < 1e-14);
        for (a, b) in s2.lengthscales().iter().zip(spatial.lengthscales()) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        for (a, b) in n2.variances().iter().zip(noise.variances()) {
            assert!((a - b).abs() < 1e-14);
        }
        let again = HyperParams::pack(&f2, &s2, &n2, KernelMode::Convolved, 1e-8).unwrap();
        for (a, b) in again.values().iter().zip(theta.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn icm_collapses_lengthscales() {
        let theta = HyperParams::pack(
            &TaskCholeskyFactor::identity(3),
            &SpatialParams::new(vec![5.0, 6.0, 7.0]).unwrap(),
            &NoiseParams::new(vec![0.1; 3]).unwrap(),
            KernelMode::Icm,
            1e-8,
        )
        .unwrap();
        assert_eq!(theta.spatial().lengthscales().len(), 1);
        assert!((theta.spatial().lengthscales()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn noise_stays_above_floor() {
        let layout = ThetaLayout::new(1, KernelMode::Icm, 1e-8);
        let theta = HyperParams::from_values(layout, vec![0.0, 0.0, -800.0]).unwrap();
        assert!(theta.noise().get(0) >= 1e-8);
    }

    #[test]
    fn rejects_wrong_length() {
        let layout = ThetaLayout::new(2, KernelMode::Convolved, 1e-8);
        assert!(matches!(
            HyperParams::from_values(layout, vec![0.0; 5]),
            Err(GpError::ThetaDimension { expected: 7, got: 5 })
        ));
    }
}
