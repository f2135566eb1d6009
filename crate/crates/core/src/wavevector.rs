use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Two-dimensional wavevector in nm⁻¹.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wavevector {
    pub kx: f64,
    pub ky: f64,
}

impl Wavevector {
    pub const ZERO: Self = Self { kx: 0.0, ky: 0.0 };

    #[inline]
    pub const fn new(kx: f64, ky: f64) -> Self {
        Self { kx, ky }
    }

    #[inline]
    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(magnitude * c, magnitude * s)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.kx * self.kx + self.ky * self.ky
    }

    #[inline]
    pub fn dot(self, other: Self) -> f64 {
        self.kx * other.kx + self.ky * other.ky
    }

    /// Counter-clockwise rotation by `angle`.
    #[inline]
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.kx - s * self.ky, s * self.kx + c * self.ky)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.kx.is_finite() && self.ky.is_finite()
    }
}

impl Add for Wavevector {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.kx + o.kx, self.ky + o.ky)
    }
}

impl Sub for Wavevector {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.kx - o.kx, self.ky - o.ky)
    }
}

impl AddAssign for Wavevector {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.kx += o.kx;
        self.ky += o.ky;
    }
}

impl SubAssign for Wavevector {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.kx -= o.kx;
        self.ky -= o.ky;
    }
}

impl Mul<f64> for Wavevector {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.kx * s, self.ky * s)
    }
}

impl Neg for Wavevector {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.kx, -self.ky)
    }
}
