//! Forward-mode scalars. `Dual` carries one directional derivative; the
//! gradient of an n-variable expression is taken with n seeded passes.
//!
//! Both number types run the same evaluation code (see `Num`), so the value
//! channel of a dual pass is bit-identical to a plain evaluation.

pub(crate) trait Num: Copy {
    fn constant(c: f64) -> Self;
    /// Coordinate entry point: `seeded` marks the differentiation variable.
    fn coord(v: f64, seeded: bool) -> Self;
    fn value(self) -> f64;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn neg(self) -> Self;
    fn pow(self, o: Self) -> Self;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    /// Sets `flag` when differentiating abs at its kink (subgradient 0 there).
    fn abs(self, flag: &mut bool) -> Self;
}

impl Num for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn coord(v: f64, _seeded: bool) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn pow(self, o: Self) -> Self {
        self.powf(o)
    }
    fn exp(self) -> Self {
        self.exp()
    }
    fn sin(self) -> Self {
        self.sin()
    }
    fn cos(self) -> Self {
        self.cos()
    }
    fn sqrt(self) -> Self {
        self.sqrt()
    }
    fn abs(self, _flag: &mut bool) -> Self {
        self.abs()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Num for Dual {
    fn constant(c: f64) -> Self {
        Dual { v: c, d: 0.0 }
    }
    fn coord(v: f64, seeded: bool) -> Self {
        Dual {
            v,
            d: if seeded { 1.0 } else { 0.0 },
        }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn add(self, o: Self) -> Self {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
    fn sub(self, o: Self) -> Self {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
    fn mul(self, o: Self) -> Self {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
    fn div(self, o: Self) -> Self {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
    fn pow(self, o: Self) -> Self {
        let v = self.v.powf(o.v);
        // Constant exponents keep the power rule valid for negative bases;
        // a varying exponent needs ln of the base.
        let d = if o.d == 0.0 {
            if self.d == 0.0 {
                0.0
            } else {
                o.v * self.v.powf(o.v - 1.0) * self.d
            }
        } else {
            v * (o.d * self.v.ln() + o.v * self.d / self.v)
        };
        Dual { v, d }
    }
    fn exp(self) -> Self {
        let v = self.v.exp();
        Dual { v, d: v * self.d }
    }
    fn sin(self) -> Self {
        Dual {
            v: self.v.sin(),
            d: self.v.cos() * self.d,
        }
    }
    fn cos(self) -> Self {
        Dual {
            v: self.v.cos(),
            d: -self.v.sin() * self.d,
        }
    }
    fn sqrt(self) -> Self {
        let v = self.v.sqrt();
        Dual {
            v,
            d: self.d / (2.0 * v),
        }
    }
    fn abs(self, flag: &mut bool) -> Self {
        if self.v == 0.0 {
            if self.d != 0.0 {
                *flag = true;
            }
            Dual {
                v: self.v.abs(),
                d: 0.0,
            }
        } else {
            Dual {
                v: self.v.abs(),
                d: self.d * self.v.signum(),
            }
        }
    }
}
