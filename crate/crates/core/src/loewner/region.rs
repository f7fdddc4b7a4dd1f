//! Regions as finite unions of axis-aligned rectangles in the closed upper
//! half-plane.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[x_min, x_max] × [y_min, y_max]`; `y_max` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let r = Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if [self.x_min, self.x_max, self.y_min, self.y_max].iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("rectangle with NaN bound"));
        }
        if !(self.x_min <= self.x_max && self.y_min <= self.y_max) {
            return Err(Error::invalid(format!("degenerate rectangle {self}")));
        }
        if self.y_min < 0.0 {
            return Err(Error::invalid(format!("rectangle {self} leaves the closed upper half-plane")));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x_min && z.re <= self.x_max && z.im >= self.y_min && z.im <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn is_bounded(&self) -> bool {
        [self.x_min, self.x_max, self.y_max].iter().all(|v| v.is_finite())
    }

    /// Largest `|z|` over the rectangle.
    pub fn max_modulus(&self) -> f64 {
        let x = self.x_min.abs().max(self.x_max.abs());
        x.hypot(self.y_max)
    }

    /// Smallest `|z|` over the rectangle.
    pub fn min_modulus(&self) -> f64 {
        let x = if self.x_min <= 0.0 && self.x_max >= 0.0 {
            0.0
        } else {
            self.x_min.abs().min(self.x_max.abs())
        };
        x.hypot(self.y_min)
    }

    /// Euclidean distance from `z` to the rectangle (0 inside).
    pub fn distance(&self, z: Complex64) -> f64 {
        let dx = (self.x_min - z.re).max(z.re - self.x_max).max(0.0);
        let dy = (self.y_min - z.im).max(z.im - self.y_max).max(0.0);
        dx.hypot(dy)
    }

    /// Mirror image across the imaginary axis.
    pub fn reflect(&self) -> Rect {
        Rect {
            x_min: -self.x_max,
            x_max: -self.x_min,
            y_min: self.y_min,
            y_max: self.y_max,
        }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x_min, self.x_max, self.y_min, self.y_max)
    }
}

impl FromStr for Rect {
    type Err = Error;

    /// Parses `x_min,x_max,y_min,y_max`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!("rectangle needs four numbers, got {s:?}")));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = parse_bound(p)?;
        }
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

fn parse_bound(s: &str) -> Result<f64> {
    match s {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Config(format!("bad number {s:?}"))),
    }
}

/// Finite union of rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    rects: Vec<Rect>,
}

impl Region {
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        if rects.is_empty() {
            return Err(Error::invalid("empty region list"));
        }
        for r in &rects {
            r.validate()?;
        }
        Ok(Region { rects })
    }

    pub fn rect(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        Region::new(vec![Rect::new(x_min, x_max, y_min, y_max)?])
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    #[inline]
    pub fn contains(&self, z: Complex64) -> bool {
        self.rects.iter().any(|r| r.contains(z))
    }

    pub fn is_bounded(&self) -> bool {
        self.rects.iter().all(Rect::is_bounded)
    }

    pub fn max_modulus(&self) -> f64 {
        self.rects.iter().map(Rect::max_modulus).fold(0.0, f64::max)
    }

    pub fn min_modulus(&self) -> f64 {
        self.rects.iter().map(Rect::min_modulus).fold(f64::INFINITY, f64::min)
    }

    /// Bounding box of the union.
    pub fn bounding_box(&self) -> Rect {
        let mut b = self.rects[0];
        for r in &self.rects[1..] {
            b.x_min = b.x_min.min(r.x_min);
            b.x_max = b.x_max.max(r.x_max);
            b.y_min = b.y_min.min(r.y_min);
            b.y_max = b.y_max.max(r.y_max);
        }
        b
    }

    pub fn reflect(&self) -> Region {
        Region {
            rects: self.rects.iter().map(Rect::reflect).collect(),
        }
    }

    /// Index of the first rectangle containing `z`.
    pub fn locate(&self, z: Complex64) -> Option<usize> {
        self.rects.iter().position(|r| r.contains(z))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rects.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for Region {
    type Err = Error;

    /// Parses `;`-separated rectangle quadruples.
    fn from_str(s: &str) -> Result<Self> {
        let rects = s
            .split(';')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Rect>>>()?;
        Region::new(rects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let r: Region = "-1,1,0.25,1.25; 0,2,0,inf".parse().unwrap();
        assert_eq!(r.rects().len(), 2);
        assert!(!r.is_bounded());
        let again: Region = r.to_string().parse().unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn rejects_bad_rectangles() {
        assert!("1,0,0,1".parse::<Region>().is_err());
        assert!("0,1,-1,1".parse::<Region>().is_err());
        assert!("0,1,0".parse::<Region>().is_err());
        assert!(Region::new(vec![]).is_err());
    }

    #[test]
    fn moduli() {
        let r = Rect::new(-0.5, 0.5, 0.5, 1.0).unwrap();
        assert!((r.min_modulus() - 0.5).abs() < 1e-15);
        assert!((r.max_modulus() - 1.25f64.sqrt()).abs() < 1e-15);
    }
}
