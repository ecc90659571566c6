//! Butcher tableaux for the supported Runge-Kutta families.
//!
//! Implicit coefficients (Gauss-Legendre and Radau IIA, `s = 1..=4`) are
//! embedded as decimal literals computed offline at 60 digits from the
//! shifted Legendre / Radau polynomial roots. Every tableau is checked
//! against the classical order conditions (up to order 4) when built.
#![allow(clippy::excessive_precision)]

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeFamily {
    GaussLegendre,
    RadauIIA,
    ExplicitRK4,
    ExplicitEuler,
    ExplicitHeun,
}

impl SchemeFamily {
    pub fn is_explicit(self) -> bool {
        matches!(
            self,
            SchemeFamily::ExplicitRK4 | SchemeFamily::ExplicitEuler | SchemeFamily::ExplicitHeun
        )
    }

    /// Stage count fixed by an explicit family, `None` for implicit ones.
    pub fn fixed_stages(self) -> Option<usize> {
        match self {
            SchemeFamily::ExplicitRK4 => Some(4),
            SchemeFamily::ExplicitEuler => Some(1),
            SchemeFamily::ExplicitHeun => Some(2),
            _ => None,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gl" | "gauss" | "gauss-legendre" | "gausslegendre" => Some(SchemeFamily::GaussLegendre),
            "radau" | "radauiia" | "radau-iia" => Some(SchemeFamily::RadauIIA),
            "rk4" | "erk4" => Some(SchemeFamily::ExplicitRK4),
            "euler" => Some(SchemeFamily::ExplicitEuler),
            "heun" => Some(SchemeFamily::ExplicitHeun),
            _ => None,
        }
    }
}

impl fmt::Display for SchemeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SchemeFamily::GaussLegendre => "gl",
            SchemeFamily::RadauIIA => "radau",
            SchemeFamily::ExplicitRK4 => "rk4",
            SchemeFamily::ExplicitEuler => "euler",
            SchemeFamily::ExplicitHeun => "heun",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    s: usize,
    /// Row-major `s x s`.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    order: usize,
    family: SchemeFamily,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.s..(i + 1) * self.s]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn family(&self) -> SchemeFamily {
        self.family
    }

    pub fn is_explicit(&self) -> bool {
        self.family.is_explicit()
    }

    /// Short name such as `gl2`, `radau3` or `rk4`.
    pub fn label(&self) -> String {
        match self.family.fixed_stages() {
            Some(_) => self.family.to_string(),
            None => format!("{}{}", self.family, self.s),
        }
    }

    /// True if `A` is strictly lower triangular.
    pub fn is_strictly_lower(&self) -> bool {
        (0..self.s).all(|i| (i..self.s).all(|j| self.a(i, j) == 0.0))
    }
}

/// One order condition and the absolute value of its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderResidual {
    pub name: &'static str,
    pub order: usize,
    pub residual: f64,
}

/// Evaluates the rooted-tree order conditions up to `up_to` (capped at 4).
pub fn check_order_conditions(tab: &ButcherTableau, up_to: usize) -> Vec<OrderResidual> {
    let s = tab.s;
    let b = &tab.b;
    let c = &tab.c;
    let dot = |x: &[f64]| -> f64 { b.iter().zip(x).map(|(bi, xi)| bi * xi).sum() };
    let a_times = |x: &[f64]| -> Vec<f64> {
        (0..s)
            .map(|i| tab.a_row(i).iter().zip(x).map(|(a, xj)| a * xj).sum())
            .collect()
    };
    let ones = vec![1.0; s];
    let c2: Vec<f64> = c.iter().map(|x| x * x).collect();
    let c3: Vec<f64> = c.iter().map(|x| x * x * x).collect();
    let ac = a_times(c);
    let ac2 = a_times(&c2);
    let a2c = a_times(&ac);
    let c_ac: Vec<f64> = c.iter().zip(&ac).map(|(x, y)| x * y).collect();

    let all = [
        ("b.1 = 1", 1, dot(&ones) - 1.0),
        ("b.c = 1/2", 2, dot(c) - 0.5),
        ("b.c^2 = 1/3", 3, dot(&c2) - 1.0 / 3.0),
        ("b.Ac = 1/6", 3, dot(&ac) - 1.0 / 6.0),
        ("b.c^3 = 1/4", 4, dot(&c3) - 0.25),
        ("b.(c*Ac) = 1/8", 4, dot(&c_ac) - 0.125),
        ("b.Ac^2 = 1/12", 4, dot(&ac2) - 1.0 / 12.0),
        ("b.A^2c = 1/24", 4, dot(&a2c) - 1.0 / 24.0),
    ];
    let cap = up_to.min(4);
    all.iter()
        .filter(|(_, ord, _)| *ord <= cap)
        .map(|&(name, order, r)| OrderResidual {
            name,
            order,
            residual: r.abs(),
        })
        .collect()
}

pub fn make_tableau(family: SchemeFamily, s: usize) -> Result<ButcherTableau> {
    let unsupported = |supported| Error::UnsupportedTableau {
        family,
        s,
        supported,
    };
    let (a, b, c, order): (Vec<f64>, Vec<f64>, Vec<f64>, usize) = match family {
        SchemeFamily::GaussLegendre => {
            if !(1..=4).contains(&s) {
                return Err(unsupported("s in 1..=4"));
            }
            let (a, b, c) = gauss_legendre(s);
            (a, b, c, 2 * s)
        }
        SchemeFamily::RadauIIA => {
            if !(1..=4).contains(&s) {
                return Err(unsupported("s in 1..=4"));
            }
            let (a, b, c) = radau_iia(s);
            (a, b, c, 2 * s - 1)
        }
        SchemeFamily::ExplicitEuler => {
            if s != 1 {
                return Err(unsupported("s = 1"));
            }
            (vec![0.0], vec![1.0], vec![0.0], 1)
        }
        SchemeFamily::ExplicitHeun => {
            if s != 2 {
                return Err(unsupported("s = 2"));
            }
            (vec![0.0, 0.0, 1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0], 2)
        }
        SchemeFamily::ExplicitRK4 => {
            if s != 4 {
                return Err(unsupported("s = 4"));
            }
            #[rustfmt::skip]
            let a = vec![
                0.0, 0.0, 0.0, 0.0,
                0.5, 0.0, 0.0, 0.0,
                0.0, 0.5, 0.0, 0.0,
                0.0, 0.0, 1.0, 0.0,
            ];
            (
                a,
                vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
                vec![0.0, 0.5, 0.5, 1.0],
                4,
            )
        }
    };
    let tab = ButcherTableau {
        s,
        a,
        b,
        c,
        order,
        family,
    };
    validate(&tab)?;
    Ok(tab)
}

/// Convenience: explicit families take their fixed stage count.
pub fn make_tableau_default(family: SchemeFamily, s: Option<usize>) -> Result<ButcherTableau> {
    let s = family.fixed_stages().or(s).unwrap_or(2);
    make_tableau(family, s)
}

fn validate(tab: &ButcherTableau) -> Result<()> {
    let fail = |detail: String| Error::InvalidTableau {
        family: tab.family,
        s: tab.s,
        detail,
    };
    let sum_b: f64 = tab.b.iter().sum();
    if (sum_b - 1.0).abs() > 1e-14 {
        return Err(fail(format!("sum(b) = {sum_b}")));
    }
    for i in 0..tab.s {
        let row: f64 = tab.a_row(i).iter().sum();
        if (row - tab.c[i]).abs() > 1e-14 {
            return Err(fail(format!("row {i} of A sums to {row}, c = {}", tab.c[i])));
        }
    }
    for r in check_order_conditions(tab, tab.order) {
        if r.residual >= 1e-12 {
            return Err(fail(format!("order condition {} residual {:e}", r.name, r.residual)));
        }
    }
    if tab.family.is_explicit() != tab.is_strictly_lower() {
        return Err(fail("A structure does not match family".into()));
    }
    if tab.family == SchemeFamily::RadauIIA && tab.c[tab.s - 1] != 1.0 {
        return Err(fail("Radau IIA requires c_s = 1".into()));
    }
    Ok(())
}

type Coeffs = (Vec<f64>, Vec<f64>, Vec<f64>);

#[rustfmt::skip]
fn gauss_legendre(s: usize) -> Coeffs {
    match s {
        1 => (vec![0.5], vec![1.0], vec![0.5]),
        2 => (
            vec![
                0.25, -0.03867513459481288225457439,
                0.5386751345948128822545744, 0.25,
            ],
            vec![0.5, 0.5],
            vec![0.2113248654051871177454256, 0.7886751345948128822545744],
        ),
        3 => (
            vec![
                0.1388888888888888888888889, -0.03597666752493890345639547, 0.009789444015308326049580042,
                0.3002631949808645924380249, 0.2222222222222222222222222, -0.02248541720308681466024717,
                0.2679883337624694517281977, 0.4804211119693833479008399, 0.1388888888888888888888889,
            ],
            vec![0.2777777777777777777777778, 0.4444444444444444444444444, 0.2777777777777777777777778],
            vec![0.1127016653792583114820735, 0.5, 0.8872983346207416885179265],
        ),
        4 => (
            vec![
                0.08696371128436346434326599, -0.02660418008499879331338513, 0.01262746268940472451505688, -0.003555149685795683156910982,
                0.1881181174998680716506855, 0.163036288715636535656734, -0.02788042860247089522415111, 0.006735500594538155515398669,
                0.1671919219741887731711333, 0.3539530060337439665376191, 0.163036288715636535656734, -0.01419069493114114296415357,
                0.177482572254522611843443, 0.3134451147418683467984111, 0.3526767575162718646268532, 0.08696371128436346434326599,
            ],
            vec![0.173927422568726928686532, 0.326072577431273071313468, 0.326072577431273071313468, 0.173927422568726928686532],
            vec![0.06943184420297371238802676, 0.3300094782075718675986671, 0.6699905217924281324013329, 0.9305681557970262876119732],
        ),
        _ => unreachable!(),
    }
}

#[rustfmt::skip]
fn radau_iia(s: usize) -> Coeffs {
    match s {
        1 => (vec![1.0], vec![1.0], vec![1.0]),
        2 => (
            vec![
                0.4166666666666666666666667, -0.08333333333333333333333333,
                0.75, 0.25,
            ],
            vec![0.75, 0.25],
            vec![0.3333333333333333333333333, 1.0],
        ),
        3 => (
            vec![
                0.1968154772236604258683861, -0.06553542585019838810852278, 0.02377097434822015242040823,
                0.3944243147390872769974117, 0.2920734116652284630205027, -0.04154875212599793019818601,
                0.3764030627004672750500754, 0.5124858261884216138388134, 0.1111111111111111111111111,
            ],
            vec![0.3764030627004672750500754, 0.5124858261884216138388134, 0.1111111111111111111111111],
            vec![0.1550510257216821901802716, 0.6449489742783178098197284, 1.0],
        ),
        4 => (
            vec![
                0.1129994793231561859938501, -0.04030922072352220573554989, 0.02580237742033639103594009, -0.009904676507266423898694112,
                0.2343839957474002565736617, 0.2068925739353589001046451, -0.04785712804854071885000849, 0.01604742280651627303662797,
                0.2166817846232503418440525, 0.4061232638673733112251986, 0.1890365181700563424729334, -0.0241821048998329395169426,
                0.2204622111767683752754785, 0.3881934688431718807802323, 0.3288443199800597439442892, 0.0625,
            ],
            vec![0.2204622111767683752754785, 0.3881934688431718807802323, 0.3288443199800597439442892, 0.0625],
            vec![0.08858795951270394739554614, 0.4094668644407347108649263, 0.7876594617608470560252419, 1.0],
        ),
        _ => unreachable!(),
    }
}
