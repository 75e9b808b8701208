use num_complex::Complex64;

/// Constant-modulus analog beamformer: phases and their unit-modulus image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBeamformer {
    pub theta: Vec<f64>,
    pub v_rf: Vec<Complex64>,
}

impl AnalogBeamformer {
    pub fn from_phases(theta: Vec<f64>) -> Self {
        let v_rf = lambda_forward(&theta);
        Self { theta, v_rf }
    }

    pub fn n_t(&self) -> usize {
        self.theta.len()
    }

    /// Largest `||v_i| - 1|` over all elements.
    pub fn modulus_deviation(&self) -> f64 {
        self.v_rf
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Maps phases to `cos(theta) + j sin(theta)` element-wise.
pub fn lambda_forward(theta: &[f64]) -> Vec<Complex64> {
    theta
        .iter()
        .map(|&t| {
            let (s, c) = t.sin_cos();
            Complex64::new(c, s)
        })
        .collect()
}
