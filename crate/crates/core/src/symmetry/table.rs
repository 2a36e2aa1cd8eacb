//! The group classification of `u_a u_a = F(t, u, u_t)` as a registry of
//! rows, each with an instantiated right-hand side and its basis operators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{symmetry_defect, GeneratorSpec, OnManifoldSampler, SampleRanges, SymmetryError, VectorField};
use crate::expr::Expr;
use crate::funcs::FFamily;
use crate::verify::JetPoint;
use crate::Real;

pub const ROW_COUNT: usize = 13;

/// Arbitrary functions of `u` in row 7, for `μ, ϰ = 0 … 3` with `x_0 = t`.
/// `b` holds the upper triangle `b01, b02, b03, b12, b13, b23` of the
/// antisymmetric matrix `b^{μϰ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row7Functions {
    pub c: [String; 4],
    pub b: [String; 6],
    pub d: String,
    pub a: [String; 4],
    pub eta: String,
}

fn strings<const N: usize>(v: [&str; N]) -> [String; N] {
    v.map(str::to_string)
}

impl Row7Functions {
    pub fn constants() -> Self {
        Self {
            c: strings(["0.5", "-0.3", "0.2", "0.7"]),
            b: strings(["0.4", "-0.6", "0.1", "0.9", "-0.2", "0.3"]),
            d: "1.3".into(),
            a: strings(["0.1", "-1", "0.5", "2"]),
            eta: "0.8".into(),
        }
    }

    pub fn quadratic() -> Self {
        Self {
            c: strings(["u^2", "0.5*u^2", "-u^2", "0.25*u^2"]),
            b: strings(["u^2", "-u^2", "0.5*u^2", "0.3*u^2", "-0.7*u^2", "u^2"]),
            d: "u^2".into(),
            a: strings(["-u^2", "2*u^2", "u^2", "0.1*u^2"]),
            eta: "u^2".into(),
        }
    }

    pub fn transcendental() -> Self {
        Self {
            c: strings(["sin(u)", "u", "cos(u)", "exp(0.5*u)"]),
            b: strings(["u", "sin(u)", "u^3", "cos(u)", "-u", "exp(-u)"]),
            d: "cosh(u)".into(),
            a: strings(["u^3", "1", "sin(2*u)", "u"]),
            eta: "exp(u)".into(),
        }
    }

    fn validate(&self) -> Result<(), SymmetryError> {
        for s in self.c.iter().chain(&self.b).chain(&self.a).chain([&self.d, &self.eta]) {
            Expr::parse(s, &["u"])?;
        }
        Ok(())
    }

    fn b_entry(&self, mu: usize, k: usize) -> String {
        const UPPER: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        if mu == k {
            return "0".into();
        }
        let (lo, hi, sign) = if mu < k { (mu, k, "") } else { (k, mu, "-") };
        let idx = UPPER.iter().position(|&p| p == (lo, hi)).expect("index pair below 4");
        format!("{sign}({})", self.b[idx])
    }
}

impl Default for Row7Functions {
    fn default() -> Self {
        Self::constants()
    }
}

/// Instantiation of the arbitrary functions and constants appearing in the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RowParams {
    /// Row 0 `F(t, u, ut)`.
    pub general: String,
    /// Row 1 `f(u, ut)`.
    pub f: String,
    /// Rows 2–4 `h(ut)`.
    pub h: String,
    /// Row 1 requires `δ ∈ {0, 1}`; row 3 requires `δ ≠ 2`.
    pub delta: f64,
    /// Row 6, `β ∉ {0, 1, 2}`.
    pub beta: f64,
    pub eps1: i8,
    pub eps2: i8,
    /// The `±` of row 11.
    pub sign: i8,
    pub row7: Row7Functions,
    /// Overrides the row's default sampling box.
    pub ranges: Option<SampleRanges>,
}

impl Default for RowParams {
    fn default() -> Self {
        Self {
            general: "2 + sin(t) + u^2 + ut^2".into(),
            f: "1 + u^2 + exp(ut)".into(),
            h: "exp(ut) + ut^2 + 3".into(),
            delta: 1.0,
            beta: 3.0,
            eps1: 1,
            eps2: 1,
            sign: 1,
            row7: Row7Functions::default(),
            ranges: None,
        }
    }
}

/// A named basis operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub field: VectorField,
}

/// One classification row instantiated at dimension `n`.
#[derive(Debug, Clone)]
pub struct TableRow<T> {
    pub row: usize,
    pub n: usize,
    pub family: FFamily<T>,
    pub generators: Vec<Generator>,
    /// Fields that are not symmetries of this row.
    pub controls: Vec<Generator>,
    pub ranges: SampleRanges,
}

/// Formats a number for embedding in generator source text.
fn num(v: f64) -> String {
    format!("({v})")
}

struct Builder {
    n: usize,
    out: Vec<Generator>,
}

impl Builder {
    fn push(&mut self, id: impl Into<String>, xi_t: &str, xi_x: Vec<String>, eta: &str) -> Result<(), SymmetryError> {
        let field = VectorField::parse(self.n, xi_t, &xi_x, eta)?;
        self.out.push(Generator { id: id.into(), field });
        Ok(())
    }

    fn zeros(&self) -> Vec<String> {
        vec!["0".to_string(); self.n]
    }

    /// `k · x_a ∂_a` coefficients.
    fn radial(&self, k: &str) -> Vec<String> {
        (1..=self.n).map(|a| format!("{k}*x{a}")).collect()
    }

    fn common(&mut self) -> Result<(), SymmetryError> {
        let n = self.n;
        for a in 0..n {
            let mut xi = self.zeros();
            xi[a] = "1".into();
            self.push(format!("p{}", a + 1), "0", xi, "0")?;
        }
        for a in 0..n {
            for b in a + 1..n {
                let mut xi = self.zeros();
                xi[a] = format!("-x{}", b + 1);
                xi[b] = format!("x{}", a + 1);
                self.push(format!("J{}{}", a + 1, b + 1), "0", xi, "0")?;
            }
        }
        Ok(())
    }

    fn p_t(&mut self) -> Result<(), SymmetryError> {
        let z = self.zeros();
        self.push("p_t", "1", z, "0")
    }

    fn p_u(&mut self) -> Result<(), SymmetryError> {
        let z = self.zeros();
        self.push("p_u", "0", z, "1")
    }

    fn dilation(&mut self) -> Result<(), SymmetryError> {
        let r = self.radial("1");
        self.push("D", "t", r, "u")
    }
}

fn parse_check(source: &str, vars: &[&str], what: &str) -> Result<(), SymmetryError> {
    Expr::parse(source, vars)
        .map(|_| ())
        .map_err(|e| SymmetryError::InvalidRow(format!("{what}: {e}")))
}

fn check_eps(p: &RowParams) -> Result<(f64, f64), SymmetryError> {
    if p.eps1.abs() != 1 || p.eps2.abs() != 1 {
        return Err(SymmetryError::InvalidRow(format!("ε1 = {}, ε2 = {} must be ±1", p.eps1, p.eps2)));
    }
    if (p.eps1, p.eps2) == (-1, -1) {
        return Err(SymmetryError::InvalidRow("(ε1, ε2) ≠ (-1, -1) is required".into()));
    }
    Ok((f64::from(p.eps1), f64::from(p.eps2)))
}

impl<T: Real> TableRow<T> {
    pub fn new(row: usize, n: usize, params: &RowParams) -> Result<Self, SymmetryError> {
        if row >= ROW_COUNT {
            return Err(SymmetryError::InvalidRow(format!("row {row} does not exist (0–12)")));
        }
        if n == 0 {
            return Err(SymmetryError::InvalidRow("n must be at least 1".into()));
        }
        if row == 7 && n != 3 {
            return Err(SymmetryError::InvalidRow(format!("row 7 is defined for n = 3 only, got n = {n}")));
        }
        let mut b = Builder { n, out: Vec::new() };
        let mut ranges = SampleRanges::default();
        b.common()?;
        let f_src = match row {
            0 => {
                parse_check(&params.general, &["t", "u", "ut"], "F(t, u, ut)")?;
                params.general.clone()
            }
            1 => {
                parse_check(&params.f, &["u", "ut"], "f(u, ut)")?;
                let d = params.delta;
                if d != 0.0 && d != 1.0 {
                    return Err(SymmetryError::InvalidRow(format!("row 1 needs δ ∈ {{0, 1}}, got {d}")));
                }
                let r = b.radial(&format!("-{}", num(d)));
                b.push("T_delta", "2", r, "0")?;
                format!("exp({}*t)*({})", num(d), params.f)
            }
            2 => {
                parse_check(&params.h, &["ut"], "h(ut)")?;
                b.p_t()?;
                let r = b.radial("-1");
                b.push("S_u", "0", r, "2")?;
                format!("exp(u)*({})", params.h)
            }
            3 => {
                parse_check(&params.h, &["ut"], "h(ut)")?;
                let d = params.delta;
                if !d.is_finite() || d == 2.0 {
                    return Err(SymmetryError::InvalidRow(format!("row 3 needs δ ≠ 2, got {d}")));
                }
                ranges.u = [0.25, 2.0];
                b.p_t()?;
                let r = b.radial(&num(d));
                b.push("S_3", "2*t", r, "2*u")?;
                format!("abs(u)^{}*({})", num(2.0 - d), params.h)
            }
            4 => {
                parse_check(&params.h, &["ut"], "h(ut)")?;
                b.p_t()?;
                b.p_u()?;
                b.dilation()?;
                params.h.clone()
            }
            5 => {
                b.p_t()?;
                b.p_u()?;
                b.dilation()?;
                let r = b.radial("1");
                b.push("G_5", "0", r, "-2*t")?;
                "exp(ut)".into()
            }
            6 => {
                let beta = params.beta;
                if !beta.is_finite() || [0.0, 1.0, 2.0].contains(&beta) {
                    return Err(SymmetryError::InvalidRow(format!("row 6 needs β ≠ 0, 1, 2, got {beta}")));
                }
                b.p_t()?;
                b.p_u()?;
                b.dilation()?;
                let r = b.radial(&num(beta - 2.0));
                b.push("G_6", "0", r, "-2*u")?;
                format!("abs(ut)^{}", num(beta))
            }
            7 => {
                row7_generators(&mut b, &params.row7)?;
                "ut^2".into()
            }
            8 => {
                let (e1, e2) = check_eps(params)?;
                row8_generators(&mut b, e1, e2)?;
                format!("{}*ut^2 + {}", num(e2), num(e1))
            }
            9 => {
                let (e1, e2) = check_eps(params)?;
                let z = b.zeros();
                b.p_t()?;
                b.push("S_9a", "t", z.clone(), "2")?;
                b.push("S_9b", &format!("t^2 - 4*{}*exp(u)", num(e1 * e2)), z, "4*t")?;
                format!("{}*exp(u)*ut^2 + {}", num(e2), num(e1))
            }
            10 => {
                let z = b.zeros();
                b.p_t()?;
                b.push("R_1", "cos(t)*tan(u)", z.clone(), "-sin(t)")?;
                b.push("R_2", "sin(t)*tan(u)", z, "cos(t)")?;
                "ut^2/cos(u)^2 + 1".into()
            }
            11 => {
                if params.sign.abs() != 1 {
                    return Err(SymmetryError::InvalidRow(format!("row 11 sign must be ±1, got {}", params.sign)));
                }
                if params.sign < 0 {
                    ranges.ut = [-0.5, 0.5];
                }
                let z = b.zeros();
                b.p_t()?;
                b.push("R_1", "cosh(t)*tan(u)", z.clone(), "sinh(t)")?;
                b.push("R_2", "sinh(t)*tan(u)", z, "cosh(t)")?;
                format!("{}*(ut^2/cos(u)^2 - 1)", num(f64::from(params.sign)))
            }
            12 => {
                let z = b.zeros();
                b.p_t()?;
                b.push("R_1", "cosh(t)*tanh(u)", z.clone(), "-sinh(t)")?;
                b.push("R_2", "sinh(t)*tanh(u)", z, "-cosh(t)")?;
                "ut^2/cosh(u)^2 + 1".into()
            }
            _ => unreachable!(),
        };
        let family = FFamily::general(&f_src)?.with_row(Some(row));
        let generators = b.out;

        let mut c = Builder { n, out: Vec::new() };
        let mut xi = c.zeros();
        xi[0] = "x1".into();
        c.push("x1*p1", "0", xi, "0")?;
        let z = c.zeros();
        c.push("(t^2+u^2)*p_u", "0", z, "t^2 + u^2")?;
        if row == 5 {
            let r = c.radial("1");
            c.push("x_a*p_a", "0", r, "0")?;
        }
        Ok(Self { row, n, family, generators, controls: c.out, ranges: params.ranges.unwrap_or(ranges) })
    }

    pub fn generator(&self, id: &str) -> Option<&Generator> {
        self.generators.iter().chain(&self.controls).find(|g| g.id == id)
    }

    /// Generators as JSON-ready coefficient strings.
    pub fn specs(&self) -> Vec<GeneratorSpec> {
        self.generators.iter().map(|g| g.field.to_spec(&g.id)).collect()
    }

    /// All fields to check, generators first, each with its control flag.
    pub fn checks(&self) -> impl Iterator<Item = (&Generator, bool)> {
        self.generators.iter().map(|g| (g, false)).chain(self.controls.iter().map(|g| (g, true)))
    }
}

fn row7_generators(b: &mut Builder, fns: &Row7Functions) -> Result<(), SymmetryError> {
    fns.validate()?;
    let xs = ["t", "x1", "x2", "x3"];
    let g = [1.0, -1.0, -1.0, -1.0];
    let sign = |m: usize| if g[m] > 0.0 { "+" } else { "-" };
    let zero4 = || vec!["0".to_string(); 4];
    let interval = "(t^2 - x1^2 - x2^2 - x3^2)";

    let c_part: Vec<String> = {
        let cx: String = (0..4).map(|m| format!(" {} ({})*{}", sign(m), fns.c[m], xs[m])).collect::<String>();
        let cx = format!("0{cx}");
        (0..4).map(|k| format!("2*({cx})*{} - ({})*{interval}", xs[k], fns.c[k])).collect()
    };
    let b_part: Vec<String> = (0..4)
        .map(|k| {
            let terms: String = (0..4).map(|m| format!(" {} ({})*{}", sign(m), fns.b_entry(m, k), xs[m])).collect();
            format!("0{terms}")
        })
        .collect();
    let d_part: Vec<String> = (0..4).map(|k| format!("({})*{}", fns.d, xs[k])).collect();
    let a_part: Vec<String> = fns.a.iter().map(|a| format!("({a})")).collect();

    let mut push = |id: &str, xi: Vec<String>, eta: &str| {
        b.push(id, &xi[0], xi[1..].to_vec(), eta)
    };
    push("C", c_part.clone(), "0")?;
    push("B", b_part.clone(), "0")?;
    push("Dil", d_part.clone(), "0")?;
    push("A", a_part.clone(), "0")?;
    push("Eta", zero4(), &fns.eta)?;
    let all: Vec<String> = (0..4)
        .map(|k| format!("{} + {} + {} + {}", c_part[k], b_part[k], d_part[k], a_part[k]))
        .collect();
    push("X", all, &fns.eta)
}

fn row8_generators(b: &mut Builder, e1: f64, e2: f64) -> Result<(), SymmetryError> {
    let n = b.n;
    b.p_t()?;
    b.p_u()?;
    b.dilation()?;
    let xx: Vec<String> = (1..=n).map(|a| format!("x{a}^2")).collect();
    let s2 = format!("({} - {}*u^2 - {}*t^2)", xx.join(" + "), num(e1), num(e2));
    for a in 1..=n {
        let mut xi = b.zeros();
        xi[a - 1] = "u".into();
        b.push(format!("J_u{a}"), "0", xi, &format!("{}*x{a}", num(e1)))?;
    }
    for a in 1..=n {
        let mut xi = b.zeros();
        xi[a - 1] = "t".into();
        b.push(format!("J_t{a}"), &format!("{}*x{a}", num(e2)), xi, "0")?;
    }
    let z = b.zeros();
    b.push("J_ut", "u", z, &format!("-{}*t", num(e1 * e2)))?;
    for a in 1..=n {
        let xi = (1..=n)
            .map(|c| if c == a { format!("2*x{a}*x{c} - {s2}") } else { format!("2*x{a}*x{c}") })
            .collect();
        b.push(format!("K_{a}"), &format!("2*x{a}*t"), xi, &format!("2*x{a}*u"))?;
    }
    let r = b.radial("2*u");
    b.push("K_u", "2*u*t", r, &format!("2*u*u + {}*{s2}", num(e1)))?;
    let r = b.radial("2*t");
    b.push("K_t", &format!("2*t*t + {}*{s2}", num(e2)), r, "2*t*u")
}

/// Largest defect of one field over a batch of on-manifold samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorReport {
    pub id: String,
    pub control: bool,
    pub samples: usize,
    pub max_defect: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub row: usize,
    pub n: usize,
    pub tol: f64,
    pub generators: Vec<GeneratorReport>,
    pub controls: Vec<GeneratorReport>,
}

/// A negative control counts as detected at or above this defect.
pub const CONTROL_THRESHOLD: f64 = 1e-2;

impl TableReport {
    /// Every listed generator stays within tolerance.
    pub fn passed(&self) -> bool {
        self.generators.iter().all(|g| g.passed)
    }

    /// Every negative control is clearly rejected.
    pub fn controls_rejected(&self) -> bool {
        self.controls.iter().all(|g| g.max_defect >= CONTROL_THRESHOLD)
    }

    pub fn max_defect(&self) -> f64 {
        self.generators.iter().map(|g| g.max_defect).fold(0.0, f64::max)
    }
}

fn describe<T: Real>(jet: &JetPoint<T>) -> String {
    let f = |v: &[T]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
    format!("t = {}, x = ({}), u = {}, u_t = {}, u_x = ({})", jet.t, f(&jet.x), jet.u, jet.u_t, f(&jet.u_x))
}

/// Checks the `index`-th entry of [`TableRow::checks`] with its own random
/// stream derived from `seed`, so results do not depend on evaluation order.
pub fn verify_generator<T: Real>(
    row: &TableRow<T>,
    index: usize,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<GeneratorReport, SymmetryError> {
    let (g, control) = row
        .checks()
        .nth(index)
        .ok_or_else(|| SymmetryError::InvalidRow(format!("no generator at index {index}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut sampler = OnManifoldSampler::with_rng(&row.family, row.n, row.ranges, rng);
    let mut max_defect = 0.0f64;
    for _ in 0..samples {
        let jet = sampler.sample()?;
        let d = symmetry_defect(&g.field, &row.family, &jet).map_err(|e| SymmetryError::AtJet {
            generator: g.id.clone(),
            jet: describe(&jet),
            message: e.to_string(),
        })?;
        max_defect = max_defect.max(d.as_f64());
    }
    Ok(GeneratorReport { id: g.id.clone(), control, samples, max_defect, passed: max_defect <= tol })
}

/// Default tolerance on the largest defect.
pub const DEFAULT_TOL: f64 = 1e-9;

pub fn verify_table<T: Real>(row: &TableRow<T>, samples: usize, tol: f64, seed: u64) -> Result<TableReport, SymmetryError> {
    if samples == 0 {
        return Err(SymmetryError::InvalidRow("samples must be at least 1".into()));
    }
    let mut generators = Vec::new();
    let mut controls = Vec::new();
    for index in 0..row.checks().count() {
        let rep = verify_generator(row, index, samples, tol, seed)?;
        if rep.control {
            controls.push(rep);
        } else {
            generators.push(rep);
        }
    }
    Ok(TableReport { row: row.row, n: row.n, tol, generators, controls })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(row: usize, n: usize, params: &RowParams) -> TableReport {
        let r = TableRow::<f64>::new(row, n, params).unwrap();
        verify_table(&r, 30, DEFAULT_TOL, 11).unwrap()
    }

    #[test]
    fn every_row_passes_with_defaults() {
        for row in (0..ROW_COUNT).filter(|&r| r != 7) {
            for n in [1, 2, 3] {
                let rep = check(row, n, &RowParams::default());
                assert!(rep.passed(), "row {row}, n = {n}: {rep:?}");
                assert!(rep.controls_rejected(), "row {row}, n = {n}: {rep:?}");
            }
        }
    }

    #[test]
    fn row7_three_instantiations() {
        for fns in [Row7Functions::constants(), Row7Functions::quadratic(), Row7Functions::transcendental()] {
            let rep = check(7, 3, &RowParams { row7: fns, ..RowParams::default() });
            assert!(rep.passed(), "{rep:?}");
            assert!(rep.controls_rejected());
        }
        assert!(TableRow::<f64>::new(7, 2, &RowParams::default()).is_err());
    }

    #[test]
    fn parameter_variants() {
        for (e1, e2) in [(1, -1), (-1, 1)] {
            for row in [8, 9] {
                let p = RowParams { eps1: e1, eps2: e2, ..RowParams::default() };
                assert!(check(row, 2, &p).passed());
            }
        }
        let p = RowParams { sign: -1, ..RowParams::default() };
        assert!(check(11, 2, &p).passed());
        let p = RowParams { delta: 0.0, ..RowParams::default() };
        assert!(check(1, 2, &p).passed());
        let p = RowParams { delta: 0.5, ..RowParams::default() };
        assert!(check(3, 2, &p).passed());
        let p = RowParams { beta: 3.5, ..RowParams::default() };
        assert!(check(6, 2, &p).passed());
    }

    #[test]
    fn invalid_parameters() {
        let bad = |row, p: RowParams| TableRow::<f64>::new(row, 2, &p).is_err();
        assert!(bad(6, RowParams { beta: 2.0, ..RowParams::default() }));
        assert!(bad(6, RowParams { beta: 1.0, ..RowParams::default() }));
        assert!(bad(8, RowParams { eps1: -1, eps2: -1, ..RowParams::default() }));
        assert!(bad(9, RowParams { eps1: -1, eps2: -1, ..RowParams::default() }));
        assert!(bad(1, RowParams { delta: 0.5, ..RowParams::default() }));
        assert!(bad(3, RowParams { delta: 2.0, ..RowParams::default() }));
        assert!(bad(4, RowParams { h: "ut + u".into(), ..RowParams::default() }));
        assert!(TableRow::<f64>::new(13, 2, &RowParams::default()).is_err());
    }

    #[test]
    fn row8_has_the_full_conformal_list() {
        let r = TableRow::<f64>::new(8, 2, &RowParams::default()).unwrap();
        let ids: Vec<&str> = r.generators.iter().map(|g| g.id.as_str()).collect();
        for id in ["p1", "p2", "J12", "p_t", "p_u", "D", "J_u1", "J_t2", "J_ut", "K_1", "K_2", "K_u", "K_t"] {
            assert!(ids.contains(&id), "{id} missing");
        }
    }

    #[test]
    fn reports_are_independent_of_order() {
        let r = TableRow::<f64>::new(5, 2, &RowParams::default()).unwrap();
        let full = verify_table(&r, 10, DEFAULT_TOL, 3).unwrap();
        let last = r.checks().count() - 1;
        let single = verify_generator(&r, last, 10, DEFAULT_TOL, 3).unwrap();
        assert_eq!(full.controls.last().unwrap(), &single);
    }

    #[test]
    fn params_from_json() {
        let p: RowParams = serde_json::from_str(r#"{"beta": 4.0, "row7": {"c": ["u","0","0","0"], "b": ["0","0","0","0","0","0"], "d": "0", "a": ["0","0","0","0"], "eta": "1"}}"#).unwrap();
        assert_eq!(p.beta, 4.0);
        assert_eq!(p.eps1, 1);
        assert!(serde_json::from_str::<RowParams>(r#"{"bta": 4.0}"#).is_err());
    }
}
