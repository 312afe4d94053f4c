use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / L)`.
    Hann,
    /// MATLAB `hanning(L)`: symmetric Hann of length `L + 2` with the two zero
    /// end points removed. This is the window of the reference STOI code.
    Hanning,
    Rectangular,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
            WindowKind::Hanning => "hanning",
            WindowKind::Rectangular => "rectangular",
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "hanning" => Ok(WindowKind::Hanning),
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            other => Err(Error::InvalidArgument(format!("unknown window kind `{other}`"))),
        }
    }
}

pub fn make_window(kind: WindowKind, length: usize) -> Result<Vec<f64>> {
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "window length must be at least 2, got {length}"
        )));
    }
    let n = length as f64;
    let w = match kind {
        WindowKind::Hann => (0..length)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect(),
        WindowKind::Hanning => (0..length)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * (i + 1) as f64 / (n + 1.0)).cos())
            .collect(),
        WindowKind::Rectangular => vec![1.0; length],
    };
    Ok(w)
}
