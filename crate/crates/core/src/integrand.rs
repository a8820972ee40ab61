//! Exact algebra for finite sums of terms c * t^k * e^{lambda t} * trig(omega t)
//! with trig one of {1, sin, cos}.
//!
//! This class is exactly what M^{-1}(t) F1(x(t)) produces for the flows in
//! this crate. It is closed under addition, multiplication (via the
//! product-to-sum identities) and antidifferentiation (via integration by
//! parts on the t-power), so definite integrals over [0, T] come out in
//! closed form with no quadrature.

use crate::manifold::reduce_angle;

/// Trigonometric factor of a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    None,
    Sin,
    Cos,
}

impl Trig {
    fn rank(self) -> u8 {
        match self {
            Trig::None => 0,
            Trig::Sin => 1,
            Trig::Cos => 2,
        }
    }
}

/// Tolerance for treating two rates or frequencies as the same canonical key.
/// All rates arising from the built-in scenarios are the integers 0, +-1, +-2
/// and compare exactly; general reals are merged within this tolerance.
const KEY_TOL: f64 = 1e-14;

/// One term c * t^power * e^{rate * t} * trig(freq * t).
///
/// Canonical form: `trig == None` forces `freq == 0`; `freq` is non-negative
/// (sin flips the sign of the coefficient, cos is even); `sin(0)` collapses
/// to zero and `cos(0)` to the trig-free term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTrigTerm {
    coeff: f64,
    power: u32,
    rate: f64,
    trig: Trig,
    freq: f64,
}

impl ExpTrigTerm {
    pub fn new(coeff: f64, power: u32, rate: f64, trig: Trig, freq: f64) -> Self {
        let rate = if rate == 0.0 { 0.0 } else { rate };
        let (coeff, trig, freq) = match trig {
            Trig::None => (coeff, Trig::None, 0.0),
            Trig::Sin if freq == 0.0 => (0.0, Trig::None, 0.0),
            Trig::Cos if freq == 0.0 => (coeff, Trig::None, 0.0),
            Trig::Sin if freq < 0.0 => (-coeff, Trig::Sin, -freq),
            Trig::Cos if freq < 0.0 => (coeff, Trig::Cos, -freq),
            t => (coeff, t, freq),
        };
        Self {
            coeff,
            power,
            rate,
            trig,
            freq,
        }
    }

    /// Constant term c.
    pub fn constant(c: f64) -> Self {
        Self::new(c, 0, 0.0, Trig::None, 0.0)
    }

    /// Monomial c * t^k.
    pub fn monomial(c: f64, k: u32) -> Self {
        Self::new(c, k, 0.0, Trig::None, 0.0)
    }

    /// Exponential c * e^{lambda t}.
    pub fn exponential(c: f64, rate: f64) -> Self {
        Self::new(c, 0, rate, Trig::None, 0.0)
    }

    /// c * sin(omega t).
    pub fn sin(c: f64, freq: f64) -> Self {
        Self::new(c, 0, 0.0, Trig::Sin, freq)
    }

    /// c * cos(omega t).
    pub fn cos(c: f64, freq: f64) -> Self {
        Self::new(c, 0, 0.0, Trig::Cos, freq)
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn trig(&self) -> Trig {
        self.trig
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    /// Evaluates the term at `t`. Trig arguments are reduced modulo 2 pi so
    /// exact period multiples evaluate exactly.
    pub fn eval(&self, t: f64) -> f64 {
        let poly = if self.power == 0 {
            1.0
        } else {
            t.powi(self.power as i32)
        };
        let expo = if self.rate == 0.0 {
            1.0
        } else {
            (self.rate * t).exp()
        };
        let trig = match self.trig {
            Trig::None => 1.0,
            Trig::Sin => reduce_angle(self.freq * t).sin(),
            Trig::Cos => reduce_angle(self.freq * t).cos(),
        };
        self.coeff * poly * expo * trig
    }

    fn same_key(&self, other: &Self) -> bool {
        self.power == other.power
            && self.trig == other.trig
            && (self.rate - other.rate).abs() <= KEY_TOL
            && (self.freq - other.freq).abs() <= KEY_TOL
    }

    fn key_order(&self, other: &Self) -> std::cmp::Ordering {
        (self.power, self.trig.rank())
            .cmp(&(other.power, other.trig.rank()))
            .then(self.rate.total_cmp(&other.rate))
            .then(self.freq.total_cmp(&other.freq))
    }
}

/// A canonical finite sum of [`ExpTrigTerm`]s: no two terms share a key and
/// no term has a zero coefficient. The empty sum is the zero function.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermSum {
    terms: Vec<ExpTrigTerm>,
}

impl TermSum {
    /// The zero function.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Sum consisting of a single term.
    pub fn from_term(term: ExpTrigTerm) -> Self {
        let mut s = Self::zero();
        s.push(term);
        s
    }

    /// Constant function c.
    pub fn constant(c: f64) -> Self {
        Self::from_term(ExpTrigTerm::constant(c))
    }

    /// Canonicalizes an arbitrary term list.
    pub fn from_terms(terms: impl IntoIterator<Item = ExpTrigTerm>) -> Self {
        let mut s = Self::zero();
        for t in terms {
            s.push(t);
        }
        s
    }

    fn push(&mut self, term: ExpTrigTerm) {
        if term.coeff == 0.0 {
            return;
        }
        if let Some(existing) = self.terms.iter_mut().find(|e| e.same_key(&term)) {
            existing.coeff += term.coeff;
            if existing.coeff == 0.0 {
                self.terms.retain(|e| e.coeff != 0.0);
            }
        } else {
            let pos = self
                .terms
                .partition_point(|e| e.key_order(&term) == std::cmp::Ordering::Less);
            self.terms.insert(pos, term);
        }
    }

    /// Terms in canonical order.
    pub fn terms(&self) -> &[ExpTrigTerm] {
        &self.terms
    }

    /// True for the empty (zero) sum.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficientwise merge.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(*t);
        }
        out
    }

    /// Scalar multiple.
    pub fn scale(&self, c: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| ExpTrigTerm::new(c * t.coeff, t.power, t.rate, t.trig, t.freq)),
        )
    }

    /// Additive inverse.
    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Termwise product with product-to-sum rewriting of the trig factors;
    /// t-powers and rates add.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for a in &self.terms {
            for b in &other.terms {
                let c = a.coeff * b.coeff;
                let k = a.power + b.power;
                let r = a.rate + b.rate;
                match (a.trig, b.trig) {
                    (Trig::None, Trig::None) => {
                        out.push(ExpTrigTerm::new(c, k, r, Trig::None, 0.0));
                    }
                    (Trig::None, t) => {
                        out.push(ExpTrigTerm::new(c, k, r, t, b.freq));
                    }
                    (t, Trig::None) => {
                        out.push(ExpTrigTerm::new(c, k, r, t, a.freq));
                    }
                    (Trig::Sin, Trig::Sin) => {
                        // sin A sin B = (cos(A-B) - cos(A+B)) / 2
                        out.push(ExpTrigTerm::new(0.5 * c, k, r, Trig::Cos, a.freq - b.freq));
                        out.push(ExpTrigTerm::new(-0.5 * c, k, r, Trig::Cos, a.freq + b.freq));
                    }
                    (Trig::Cos, Trig::Cos) => {
                        // cos A cos B = (cos(A-B) + cos(A+B)) / 2
                        out.push(ExpTrigTerm::new(0.5 * c, k, r, Trig::Cos, a.freq - b.freq));
                        out.push(ExpTrigTerm::new(0.5 * c, k, r, Trig::Cos, a.freq + b.freq));
                    }
                    (Trig::Sin, Trig::Cos) => {
                        // sin A cos B = (sin(A+B) + sin(A-B)) / 2
                        out.push(ExpTrigTerm::new(0.5 * c, k, r, Trig::Sin, a.freq + b.freq));
                        out.push(ExpTrigTerm::new(0.5 * c, k, r, Trig::Sin, a.freq - b.freq));
                    }
                    (Trig::Cos, Trig::Sin) => {
                        // cos A sin B = (sin(A+B) - sin(A-B)) / 2
                        out.push(ExpTrigTerm::new(0.5 * c, k, r, Trig::Sin, a.freq + b.freq));
                        out.push(ExpTrigTerm::new(-0.5 * c, k, r, Trig::Sin, a.freq - b.freq));
                    }
                }
            }
        }
        out
    }

    /// Pointwise value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    /// Exact antiderivative, again a [`TermSum`]. The t-power is reduced by
    /// integration by parts; the power-zero base cases are the standard
    /// e^{lambda t} sin/cos antiderivatives.
    pub fn antiderivative(&self) -> Self {
        let mut out = Self::zero();
        for term in &self.terms {
            out = out.add(&term_antiderivative(term));
        }
        out
    }

    /// Closed-form definite integral over [0, T].
    pub fn definite_integral(&self, t_end: f64) -> f64 {
        let anti = self.antiderivative();
        anti.eval(t_end) - anti.eval(0.0)
    }
}

fn term_antiderivative(term: &ExpTrigTerm) -> TermSum {
    let c = term.coeff;
    if c == 0.0 {
        return TermSum::zero();
    }
    if term.power == 0 {
        return base_antiderivative(term);
    }
    if term.rate == 0.0 && term.trig == Trig::None {
        // plain monomial
        return TermSum::from_term(ExpTrigTerm::monomial(
            c / (term.power as f64 + 1.0),
            term.power + 1,
        ));
    }
    // integral(t^k f) = t^k F - k * integral(t^{k-1} F), F = integral(f)
    let base = ExpTrigTerm::new(c, 0, term.rate, term.trig, term.freq);
    let f_anti = base_antiderivative(&base);
    let mut shifted = TermSum::zero();
    let mut lowered = TermSum::zero();
    for t in f_anti.terms() {
        shifted = shifted.add(&TermSum::from_term(ExpTrigTerm::new(
            t.coeff,
            t.power + term.power,
            t.rate,
            t.trig,
            t.freq,
        )));
        lowered = lowered.add(&TermSum::from_term(ExpTrigTerm::new(
            t.coeff * term.power as f64,
            t.power + term.power - 1,
            t.rate,
            t.trig,
            t.freq,
        )));
    }
    shifted.add(&lowered.antiderivative().neg())
}

/// Antiderivative of c * e^{lambda t} * trig(omega t) (power zero).
fn base_antiderivative(term: &ExpTrigTerm) -> TermSum {
    let c = term.coeff;
    let l = term.rate;
    let w = term.freq;
    match term.trig {
        Trig::None => {
            if l == 0.0 {
                TermSum::from_term(ExpTrigTerm::monomial(c, 1))
            } else {
                TermSum::from_term(ExpTrigTerm::exponential(c / l, l))
            }
        }
        Trig::Cos => {
            // integral e^{lt} cos(wt) = e^{lt} (l cos(wt) + w sin(wt)) / (l^2 + w^2)
            let d = l * l + w * w;
            TermSum::from_terms([
                ExpTrigTerm::new(c * l / d, 0, l, Trig::Cos, w),
                ExpTrigTerm::new(c * w / d, 0, l, Trig::Sin, w),
            ])
        }
        Trig::Sin => {
            // integral e^{lt} sin(wt) = e^{lt} (l sin(wt) - w cos(wt)) / (l^2 + w^2)
            let d = l * l + w * w;
            TermSum::from_terms([
                ExpTrigTerm::new(c * l / d, 0, l, Trig::Sin, w),
                ExpTrigTerm::new(-c * w / d, 0, l, Trig::Cos, w),
            ])
        }
    }
}
