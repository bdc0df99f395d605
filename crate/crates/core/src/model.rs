//! Model constants, threshold ramps, and reaction terms.
//!
//! Four cell populations live in the crypt: stem (s), progenitor (p),
//! enterocyte (e), and goblet (g) cells, together with the butyrate
//! concentration c_b. Every regulation mechanism — where division happens,
//! where differentiation and extrusion kick in, how crowding and butyrate
//! throttle division — is expressed through one generic smooth threshold
//! ramp parameterized by a center K and half-width κ:
//!
//! ```text
//!          0                                  y ≤ K − κ
//! R(y) =   cubic rising smoothly from 0 to 1  K − κ ≤ y ≤ K + κ
//!          1                                  y ≥ K + κ
//! ```
//!
//! The cubic is −y³/(4κ³) + 3Ky²/(4κ³) − (3K² − 3κ²)y/(4κ³) +
//! (K³ + 2κ³ − 3Kκ²)/(4κ³); it makes R continuously differentiable and
//! non-decreasing with R(K) = 1/2. Ramps of position x gate events to crypt
//! zones, ramps of the total density ρ implement contact inhibition (they
//! saturate at a common plateau M̄), and ramps of c_b encode the butyrate
//! response.

use std::fmt;

fn finite_positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn finite_nonnegative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// One smooth threshold ramp: center `k`, half-width `kappa`.
///
/// Valid specs have `kappa > 0` and `k − kappa > 0`, so the ramp vanishes on
/// the negative half-line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSpec {
    pub k: f64,
    pub kappa: f64,
}

impl RampSpec {
    pub fn new(k: f64, kappa: f64) -> Self {
        RampSpec { k, kappa }
    }

    pub fn validate(&self, name: &str) -> Result<(), InvalidParameters> {
        if !finite_positive(self.kappa) {
            return Err(InvalidParameters::new(format!(
                "ramp {name}: kappa = {} must be positive",
                self.kappa
            )));
        }
        if !self.k.is_finite() || !finite_positive(self.k - self.kappa) {
            return Err(InvalidParameters::new(format!(
                "ramp {name}: K - kappa = {} must be positive",
                self.k - self.kappa
            )));
        }
        Ok(())
    }

    /// Ramp value in [0,1]; total on all of ℝ.
    ///
    /// The transition cubic is evaluated in the centered form
    /// 1/2 + 3d/(4κ) − d³/(4κ³) with d = y − K, which is the same
    /// polynomial with the cancellation-prone expanded coefficients
    /// factored out; it hits 0, 1/2, 1 exactly at K−κ, K, K+κ.
    pub fn eval(&self, y: f64) -> f64 {
        let (k, kap) = (self.k, self.kappa);
        if y <= k - kap {
            0.0
        } else if y >= k + kap {
            1.0
        } else {
            let d = y - k;
            0.5 + 0.25 * (3.0 * d / kap - d * d * d / (kap * kap * kap))
        }
    }

    /// Exact derivative of [`RampSpec::eval`]: 3(κ² − (y−K)²)/(4κ³) inside
    /// the transition band, zero outside. Peaks at 3/(4κ) at y = K.
    pub fn derivative(&self, y: f64) -> f64 {
        let (k, kap) = (self.k, self.kappa);
        if y <= k - kap || y >= k + kap {
            0.0
        } else {
            let d = y - k;
            3.0 * (kap * kap - d * d) / (4.0 * kap * kap * kap)
        }
    }

    /// Lipschitz constant of the ramp, 3/(4κ).
    pub fn lipschitz(&self) -> f64 {
        0.75 / self.kappa
    }

    /// Right end of the transition band, K + κ; the ramp is 1 beyond it.
    pub fn plateau_start(&self) -> f64 {
        self.k + self.kappa
    }
}

/// The four cell populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Stem,
    Progenitor,
    Enterocyte,
    Goblet,
}

impl Species {
    pub const ALL: [Species; 4] =
        [Species::Stem, Species::Progenitor, Species::Enterocyte, Species::Goblet];

    pub fn index(self) -> usize {
        match self {
            Species::Stem => 0,
            Species::Progenitor => 1,
            Species::Enterocyte => 2,
            Species::Goblet => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Species::Stem => "s",
            Species::Progenitor => "p",
            Species::Enterocyte => "e",
            Species::Goblet => "g",
        }
    }
}

/// Per-species reaction values (f_s, f_p, f_e, f_g) at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceRates {
    pub stem: f64,
    pub progenitor: f64,
    pub enterocyte: f64,
    pub goblet: f64,
}

impl SourceRates {
    pub fn sum(&self) -> f64 {
        self.stem + self.progenitor + self.enterocyte + self.goblet
    }

    pub fn get(&self, species: Species) -> f64 {
        match species {
            Species::Stem => self.stem,
            Species::Progenitor => self.progenitor,
            Species::Enterocyte => self.enterocyte,
            Species::Goblet => self.goblet,
        }
    }
}

/// All model constants: event rates, butyrate constants, and the ramp
/// specs regulating each event.
///
/// Rate naming follows the events: `q_div_*` symmetric division, `q_s_p`
/// differentiation of stem into progenitor cells, `q_p_e`/`q_p_g`
/// differentiation of progenitors, `q_ex_*` extrusion at the crypt top.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// Stem division rate.
    pub q_div_s: f64,
    /// Stem → progenitor differentiation rate.
    pub q_s_p: f64,
    /// Progenitor division rate.
    pub q_div_p: f64,
    /// Progenitor → enterocyte differentiation rate.
    pub q_p_e: f64,
    /// Progenitor → goblet differentiation rate.
    pub q_p_g: f64,
    /// Enterocyte extrusion rate.
    pub q_ex_e: f64,
    /// Goblet extrusion rate.
    pub q_ex_g: f64,
    /// Butyrate diffusivity.
    pub sigma_b: f64,
    /// Butyrate production rate.
    pub gamma: f64,
    /// Dirichlet offset concentration in the butyrate source.
    pub c_b_d: f64,

    // Ramps of position x in [0,1].
    pub r_div_s: RampSpec,
    pub r_s_p: RampSpec,
    pub r_div_p: RampSpec,
    pub r_p_e: RampSpec,
    pub r_p_g: RampSpec,
    pub r_ex_e: RampSpec,
    pub r_ex_g: RampSpec,

    // Ramps of the total density ρ (crowding); they share the plateau M̄.
    pub rbar_div_s: RampSpec,
    pub rbar_div_p: RampSpec,
    pub rbar_ex_e: RampSpec,
    pub rbar_ex_g: RampSpec,

    // Ramps of the butyrate concentration c_b.
    pub runder_div_s: RampSpec,
    pub runder_p_e: RampSpec,
    pub runder_p_g: RampSpec,
}

impl Default for Parameters {
    /// Unit rates and a zonation that places division at the bottom,
    /// differentiation in the middle, and extrusion at the top of the crypt.
    fn default() -> Self {
        Parameters {
            q_div_s: 1.0,
            q_s_p: 1.0,
            q_div_p: 1.0,
            q_p_e: 1.0,
            q_p_g: 1.0,
            q_ex_e: 1.0,
            q_ex_g: 1.0,
            sigma_b: 1.0,
            gamma: 1.0,
            c_b_d: 1.0,
            r_div_s: RampSpec::new(0.35, 0.1),
            r_s_p: RampSpec::new(0.25, 0.1),
            r_div_p: RampSpec::new(0.8, 0.1),
            r_p_e: RampSpec::new(0.6, 0.1),
            r_p_g: RampSpec::new(0.6, 0.1),
            r_ex_e: RampSpec::new(0.9, 0.08),
            r_ex_g: RampSpec::new(0.9, 0.08),
            rbar_div_s: RampSpec::new(1.0, 0.2),
            rbar_div_p: RampSpec::new(1.0, 0.2),
            rbar_ex_e: RampSpec::new(1.0, 0.2),
            rbar_ex_g: RampSpec::new(1.0, 0.2),
            runder_div_s: RampSpec::new(0.5, 0.2),
            runder_p_e: RampSpec::new(0.5, 0.2),
            runder_p_g: RampSpec::new(0.5, 0.2),
        }
    }
}

impl Parameters {
    fn rates(&self) -> [f64; 7] {
        [self.q_div_s, self.q_s_p, self.q_div_p, self.q_p_e, self.q_p_g, self.q_ex_e, self.q_ex_g]
    }

    fn ramps(&self) -> [(&'static str, &RampSpec); 14] {
        [
            ("r_div_s", &self.r_div_s),
            ("r_s_p", &self.r_s_p),
            ("r_div_p", &self.r_div_p),
            ("r_p_e", &self.r_p_e),
            ("r_p_g", &self.r_p_g),
            ("r_ex_e", &self.r_ex_e),
            ("r_ex_g", &self.r_ex_g),
            ("rbar_div_s", &self.rbar_div_s),
            ("rbar_div_p", &self.rbar_div_p),
            ("rbar_ex_e", &self.rbar_ex_e),
            ("rbar_ex_g", &self.rbar_ex_g),
            ("runder_div_s", &self.runder_div_s),
            ("runder_p_e", &self.runder_p_e),
            ("runder_p_g", &self.runder_p_g),
        ]
    }

    /// Structural validity: nonnegative finite rates, positive butyrate
    /// constants, valid ramps. Rate-free parameter sets (all q = 0) pass;
    /// they are legitimate in conservation studies.
    pub fn validate_structure(&self) -> Result<(), InvalidParameters> {
        for (name, q) in
            ["q_div_s", "q_s_p", "q_div_p", "q_p_e", "q_p_g", "q_ex_e", "q_ex_g"]
                .iter()
                .zip(self.rates())
        {
            if !finite_nonnegative(q) {
                return Err(InvalidParameters::new(format!(
                    "{name} = {q} must be a nonnegative finite rate"
                )));
            }
        }
        if !finite_positive(self.sigma_b) {
            return Err(InvalidParameters::new(format!(
                "sigma_b = {} must be positive",
                self.sigma_b
            )));
        }
        for (name, value) in [("gamma", self.gamma), ("c_b_d", self.c_b_d)] {
            if !finite_nonnegative(value) {
                return Err(InvalidParameters::new(format!(
                    "{name} = {value} must be nonnegative"
                )));
            }
        }
        for (name, ramp) in self.ramps() {
            ramp.validate(name)?;
        }
        Ok(())
    }

    /// Full production contract: structure plus strictly positive rates
    /// where the model demands them.
    pub fn validate(&self) -> Result<(), InvalidParameters> {
        self.validate_structure()?;
        if self.q_inf() == 0.0 {
            return Err(InvalidParameters::new(
                "q_inf = 0: at least one event rate must be positive".to_string(),
            ));
        }
        for (name, value) in [("gamma", self.gamma), ("c_b_d", self.c_b_d)] {
            if value == 0.0 {
                return Err(InvalidParameters::new(format!("{name} = {value} must be positive")));
            }
        }
        Ok(())
    }

    /// q∞, the largest of the seven event rates.
    pub fn q_inf(&self) -> f64 {
        self.rates().into_iter().fold(0.0, f64::max)
    }

    /// The common crowding plateau M̄: every density ramp equals 1 beyond it.
    pub fn m_bar(&self) -> f64 {
        [&self.rbar_div_s, &self.rbar_div_p, &self.rbar_ex_e, &self.rbar_ex_g]
            .into_iter()
            .map(RampSpec::plateau_start)
            .fold(0.0, f64::max)
    }

    /// The a-priori bound M∞^ε = max(sup ρ⁰, M̄) + ε on the regularized
    /// total density.
    pub fn m_inf_eps(&self, rho0_sup: f64, eps: f64) -> f64 {
        self.rho0_sup_check(rho0_sup);
        self.m_bar().max(rho0_sup) + eps
    }

    fn rho0_sup_check(&self, rho0_sup: f64) {
        debug_assert!(rho0_sup >= 0.0 && rho0_sup.is_finite());
    }

    /// Largest Lipschitz constant among all fourteen ramps.
    pub fn max_ramp_lipschitz(&self) -> f64 {
        self.ramps().into_iter().map(|(_, r)| r.lipschitz()).fold(0.0, f64::max)
    }

    /// The four reaction terms (f_s, f_p, f_e, f_g) at one point.
    ///
    /// Division is throttled by position, crowding, and butyrate;
    /// differentiation transfers mass s → p and p → e/g; extrusion removes
    /// e and g near the crypt top.
    #[allow(clippy::too_many_arguments)]
    pub fn source_terms(
        &self,
        x: f64,
        rho: f64,
        rho_s: f64,
        rho_p: f64,
        rho_e: f64,
        rho_g: f64,
        c_b: f64,
    ) -> SourceRates {
        let div_s = rho_s
            * self.q_div_s
            * (1.0 - self.r_div_s.eval(x))
            * (1.0 - self.rbar_div_s.eval(rho))
            * (1.0 - self.runder_div_s.eval(c_b));
        let s_to_p = rho_s * self.q_s_p * self.r_s_p.eval(x);
        let div_p =
            rho_p * self.q_div_p * (1.0 - self.r_div_p.eval(x)) * (1.0 - self.rbar_div_p.eval(rho));
        let p_to_e = rho_p * self.q_p_e * self.r_p_e.eval(x) * self.runder_p_e.eval(c_b);
        let p_to_g = rho_p * self.q_p_g * self.r_p_g.eval(x) * self.runder_p_g.eval(c_b);
        let ex_e = rho_e * self.q_ex_e * self.r_ex_e.eval(x) * self.rbar_ex_e.eval(rho);
        let ex_g = rho_g * self.q_ex_g * self.r_ex_g.eval(x) * self.rbar_ex_g.eval(rho);

        SourceRates {
            stem: div_s - s_to_p,
            progenitor: div_p - p_to_e - p_to_g + s_to_p,
            enterocyte: p_to_e - ex_e,
            goblet: p_to_g - ex_g,
        }
    }

    /// The total reaction term f = Σ f_i in its reduced four-term form:
    /// the differentiation transfers cancel pairwise, leaving the two
    /// division gains minus the two extrusion losses.
    #[allow(clippy::too_many_arguments)]
    pub fn total_source(
        &self,
        x: f64,
        rho: f64,
        rho_s: f64,
        rho_p: f64,
        rho_e: f64,
        rho_g: f64,
        c_b: f64,
    ) -> f64 {
        rho_s
            * self.q_div_s
            * (1.0 - self.r_div_s.eval(x))
            * (1.0 - self.rbar_div_s.eval(rho))
            * (1.0 - self.runder_div_s.eval(c_b))
            + rho_p
                * self.q_div_p
                * (1.0 - self.r_div_p.eval(x))
                * (1.0 - self.rbar_div_p.eval(rho))
            - rho_e * self.q_ex_e * self.r_ex_e.eval(x) * self.rbar_ex_e.eval(rho)
            - rho_g * self.q_ex_g * self.r_ex_g.eval(x) * self.rbar_ex_g.eval(rho)
    }

    /// Coefficient of ρ_i in f_i at fixed (x, ρ, c_b): f_i is linear in its
    /// own density once the other arguments are frozen, f_i = rate·ρ_i + gain.
    pub fn self_rate(&self, species: Species, x: f64, rho: f64, c_b: f64) -> f64 {
        match species {
            Species::Stem => {
                self.q_div_s
                    * (1.0 - self.r_div_s.eval(x))
                    * (1.0 - self.rbar_div_s.eval(rho))
                    * (1.0 - self.runder_div_s.eval(c_b))
                    - self.q_s_p * self.r_s_p.eval(x)
            }
            Species::Progenitor => {
                self.q_div_p * (1.0 - self.r_div_p.eval(x)) * (1.0 - self.rbar_div_p.eval(rho))
                    - self.q_p_e * self.r_p_e.eval(x) * self.runder_p_e.eval(c_b)
                    - self.q_p_g * self.r_p_g.eval(x) * self.runder_p_g.eval(c_b)
            }
            Species::Enterocyte => -self.q_ex_e * self.r_ex_e.eval(x) * self.rbar_ex_e.eval(rho),
            Species::Goblet => -self.q_ex_g * self.r_ex_g.eval(x) * self.rbar_ex_g.eval(rho),
        }
    }

    /// Differentiation inflow into `species` given the donor-species density
    /// (ρ_s for progenitors, ρ_p for enterocytes/goblets; stem cells receive
    /// nothing).
    pub fn transfer_gain(&self, species: Species, x: f64, c_b: f64, donor_density: f64) -> f64 {
        match species {
            Species::Stem => 0.0,
            Species::Progenitor => donor_density * self.q_s_p * self.r_s_p.eval(x),
            Species::Enterocyte => {
                donor_density * self.q_p_e * self.r_p_e.eval(x) * self.runder_p_e.eval(c_b)
            }
            Species::Goblet => {
                donor_density * self.q_p_g * self.r_p_g.eval(x) * self.runder_p_g.eval(c_b)
            }
        }
    }
}

/// A parameter set violating the model contract.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidParameters {
    message: String,
}

impl InvalidParameters {
    pub fn new(message: String) -> Self {
        InvalidParameters { message }
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl fmt::Display for InvalidParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid parameters: {}", self.message)
    }
}

impl std::error::Error for InvalidParameters {}
