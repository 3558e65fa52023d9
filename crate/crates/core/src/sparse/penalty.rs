/// How the local budget λ_i constrains the block residual r = x − Dα.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualBound {
    /// `‖r‖² ≤ λ_i`: the residual may carry exactly the expected noise energy.
    #[default]
    Squared,
    /// `½‖r‖² ≤ λ_i`: admits twice the noise energy, so codes are sparser.
    HalfSquared,
}

impl ResidualBound {
    pub fn as_str(self) -> &'static str {
        match self {
            ResidualBound::Squared => "squared",
            ResidualBound::HalfSquared => "half_squared",
        }
    }
}

/// Penalty levels for training and for the locally bounded coder, plus the
/// reweighting stop rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyRule {
    /// Multiplier applied to every local bound λ_i (1 reproduces the default).
    pub lambda_scale: f64,
    pub residual_bound: ResidualBound,
    pub reweight_tol: f64,
    pub max_reweight: usize,
}

impl Default for PenaltyRule {
    fn default() -> Self {
        Self { lambda_scale: 1.0, residual_bound: ResidualBound::Squared, reweight_tol: 1e-5, max_reweight: 40 }
    }
}

impl PenaltyRule {
    /// `1.2 / √m`, for unit-norm training columns.
    pub fn lambda_train(m: usize) -> f64 {
        1.2 / (m as f64).sqrt()
    }

    /// `σ² (m + 3 √(2m))`: the squared-residual budget of a block whose
    /// entries carry Gaussian noise of variance σ².
    pub fn lambda_local(&self, sigma2: f64, m: usize) -> f64 {
        let m = m as f64;
        self.lambda_scale * sigma2 * (m + 3.0 * (2.0 * m).sqrt())
    }

    /// The value handed to the coder, whose constraint is `½‖r‖² ≤ bound`.
    pub fn coder_bound(&self, sigma2: f64, m: usize) -> f64 {
        let lambda = self.lambda_local(sigma2, m);
        match self.residual_bound {
            ResidualBound::Squared => 0.5 * lambda,
            ResidualBound::HalfSquared => lambda,
        }
    }
}
