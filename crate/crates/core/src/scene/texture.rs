use serde::{Deserialize, Serialize};

/// Multiplicative surface pattern evaluated in face coordinates (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    Solid,
    Checker {
        period: [f64; 2],
        contrast: f64,
    },
    Stripes {
        period: f64,
        angle: f64,
        contrast: f64,
    },
    Dots {
        period: f64,
        radius: f64,
        contrast: f64,
    },
}

/// Procedural texture: a base color, a low-frequency tint wave along the
/// first face axis, and a pattern on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub base: [f64; 3],
    #[serde(default)]
    pub tint: [f64; 3],
    #[serde(default = "default_tint_period")]
    pub tint_period: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "solid")]
    pub pattern: Pattern,
}

fn default_tint_period() -> f64 {
    8.0
}

fn solid() -> Pattern {
    Pattern::Solid
}

impl Texture {
    pub fn solid(rgb: [f64; 3]) -> Self {
        Self {
            base: rgb,
            tint: [0.0; 3],
            tint_period: default_tint_period(),
            phase: 0.0,
            pattern: Pattern::Solid,
        }
    }

    #[inline]
    pub fn color(&self, a: f64, b: f64) -> [f64; 3] {
        let wave = if self.tint == [0.0; 3] {
            0.0
        } else {
            smooth_wave(a / self.tint_period + self.phase)
        };
        let f = self.pattern.factor(a, b);
        [
            (self.base[0] + self.tint[0] * wave) * f,
            (self.base[1] + self.tint[1] * wave) * f,
            (self.base[2] + self.tint[2] * wave) * f,
        ]
    }
}

/// Period-1 wave in `[0, 1]`: a smoothstepped triangle, cheaper than `sin`.
#[inline]
fn smooth_wave(x: f64) -> f64 {
    let s = x - floor(x);
    let tri = 1.0 - (2.0 * s - 1.0).abs();
    tri * tri * (3.0 - 2.0 * tri)
}

/// `f64::floor` without the libm call on baseline x86-64. Exact for the
/// face coordinates seen here (|x| far below 2^52).
#[inline]
fn floor(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

impl Pattern {
    #[inline]
    fn factor(&self, a: f64, b: f64) -> f64 {
        match *self {
            Pattern::Solid => 1.0,
            Pattern::Checker { period, contrast } => {
                let i = floor(a / period[0]) as i64 + floor(b / period[1]) as i64;
                if i.rem_euclid(2) == 0 {
                    1.0 + contrast
                } else {
                    1.0 - contrast
                }
            }
            Pattern::Stripes {
                period,
                angle,
                contrast,
            } => {
                let s = (a * angle.cos() + b * angle.sin()) / period;
                if s - floor(s) < 0.5 {
                    1.0 + contrast
                } else {
                    1.0 - contrast
                }
            }
            Pattern::Dots {
                period,
                radius,
                contrast,
            } => {
                let da = a - period * (a / period).round();
                let db = b - period * (b / period).round();
                if da * da + db * db < radius * radius {
                    1.0 - contrast
                } else {
                    1.0
                }
            }
        }
    }
}
