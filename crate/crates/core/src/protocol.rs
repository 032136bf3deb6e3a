//! Illumination sets used for capture.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::forward::{GainTriple, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandProtocol {
    /// White only.
    Three,
    /// Red, green and blue primaries.
    Nine,
    /// Primaries, secondaries and white, white last.
    TwentyOne,
}

impl BandProtocol {
    pub const ALL: [BandProtocol; 3] = [BandProtocol::Three, BandProtocol::Nine, BandProtocol::TwentyOne];

    pub fn gains(self) -> Vec<GainTriple> {
        use GainTriple as G;
        match self {
            BandProtocol::Three => vec![G::WHITE],
            BandProtocol::Nine => vec![G::RED, G::GREEN, G::BLUE],
            BandProtocol::TwentyOne => vec![G::RED, G::GREEN, G::BLUE, G::CYAN, G::MAGENTA, G::YELLOW, G::WHITE],
        }
    }

    pub fn n_illuminations(self) -> usize {
        self.gains().len()
    }

    /// Total number of camera measurements per pixel.
    pub fn bands(self) -> usize {
        CHANNELS * self.n_illuminations()
    }

    /// Illumination whose anchor wavelength value fixes the scale. The green
    /// primary is used for the primaries-only set, since the blue primary can be
    /// nearly dark at mid-visible anchor wavelengths.
    pub fn anchor_illumination(self) -> usize {
        match self {
            BandProtocol::Nine => 1,
            _ => self.n_illuminations() - 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BandProtocol::Three => "3band",
            BandProtocol::Nine => "9band",
            BandProtocol::TwentyOne => "21band",
        }
    }
}

impl fmt::Display for BandProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().trim_end_matches("band") {
            "3" => Ok(BandProtocol::Three),
            "9" => Ok(BandProtocol::Nine),
            "21" => Ok(BandProtocol::TwentyOne),
            _ => Err(Error::InvalidConfig(format!("unknown band protocol '{s}', expected 3, 9 or 21"))),
        }
    }
}
