use serde::Serialize;

/// Every numerical threshold used by the pipeline, in one place.
///
/// The defaults are what the library uses when nothing is overridden; the CLI
/// can override each field from its config file (`tol.<field> = value`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative asymmetry accepted by the Hermitian eigensolver.
    pub hermiticity: f64,
    /// `‖U*U − I‖` accepted for unitary inputs.
    pub unitarity: f64,
    /// Smallest singular value below which Löwdin orthonormalization fails.
    pub rank_error: f64,
    /// Smallest singular value below which a transport step is reported.
    pub rank_warning: f64,
    /// Distance of an eigenphase to π that counts as hitting the branch cut.
    pub branch_cut: f64,
    /// Scalar phase used to rotate eigenphases away from the branch cut on retry.
    pub branch_shift: f64,
    /// Smallest accepted band gap `ε_{N+1} − ε_N`.
    pub gap: f64,
    /// Floor on the antipodal margin of a reference vector.
    pub reference_margin: f64,
    /// Number of candidate reference vectors tried.
    pub candidate_budget: usize,
    /// Distance below which two eigenvalues are considered degenerate.
    pub eigenvalue_collision: f64,
    /// Per-step phase increments must stay below `π − aliasing_margin`.
    pub aliasing_margin: f64,
    /// Maximum distance of a discrete winding number to an integer.
    pub integer_residual: f64,
    /// Default number of homotopy time points (`t = 0 … 1`).
    pub t_points: usize,
    /// Allowed residual of the b-vector completeness relation.
    pub shell_completeness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermiticity: 1e-12,
            unitarity: 1e-10,
            rank_error: 1e-8,
            rank_warning: 0.1,
            branch_cut: 1e-6,
            branch_shift: 0.25,
            gap: 1e-8,
            reference_margin: 0.05,
            candidate_budget: 64,
            eigenvalue_collision: 1e-6,
            aliasing_margin: 0.1,
            integer_residual: 0.1,
            t_points: 33,
            shell_completeness: 1e-8,
        }
    }
}

impl Tolerances {
    /// Set a field by its name, as written in config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let float = || value.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        let count = || value.parse::<usize>().map_err(|e| format!("{key}: {e}"));
        match key {
            "hermiticity" => self.hermiticity = float()?,
            "unitarity" => self.unitarity = float()?,
            "rank_error" | "rank-error" => self.rank_error = float()?,
            "rank_warning" | "rank-warning" => self.rank_warning = float()?,
            "branch_cut" | "branch-cut" => self.branch_cut = float()?,
            "branch_shift" | "branch-shift" => self.branch_shift = float()?,
            "gap" => self.gap = float()?,
            "reference_margin" | "reference-margin" => self.reference_margin = float()?,
            "candidate_budget" | "candidate-budget" => self.candidate_budget = count()?,
            "eigenvalue_collision" | "eigenvalue-collision" => self.eigenvalue_collision = float()?,
            "aliasing_margin" | "aliasing-margin" => self.aliasing_margin = float()?,
            "integer_residual" | "integer-residual" => self.integer_residual = float()?,
            "t_points" | "t-points" => self.t_points = count()?,
            "shell_completeness" | "shell-completeness" => self.shell_completeness = float()?,
            _ => return Err(format!("unknown tolerance `{key}`")),
        }
        Ok(())
    }
}
