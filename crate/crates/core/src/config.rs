//! Plain-text (TOML) game parameter files.
//!
//! Keys are the cost symbols: `A_H B_H D_H a_H b_H A_M B_M D_M a_M b_M`,
//! plus `d_H`, `d_M` and an optional `name`. Matrices are row-major arrays of
//! rows. `coupling_layout = "transposed"` means `B_H` and `B_M` are written as
//! their transposes (rows indexed by the partner's action), which is how the
//! bundled tables are laid out.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameParams, Matrix, PlayerCost, Vector};

pub const BUNDLED_2X2: &str = include_str!("../../../configs/game_2x2.toml");
pub const BUNDLED_1X2: &str = include_str!("../../../configs/game_1x2.toml");
pub const BUNDLED_2X1: &str = include_str!("../../../configs/game_2x1.toml");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingLayout {
    #[default]
    Standard,
    Transposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "d_H")]
    pub d_h: usize,
    #[serde(rename = "d_M")]
    pub d_m: usize,
    #[serde(default, skip_serializing_if = "is_standard")]
    pub coupling_layout: CouplingLayout,

    #[serde(rename = "A_H")]
    pub a_h_mat: Vec<Vec<f64>>,
    #[serde(rename = "B_H")]
    pub b_h_mat: Vec<Vec<f64>>,
    #[serde(rename = "D_H")]
    pub d_h_mat: Vec<Vec<f64>>,
    #[serde(rename = "a_H")]
    pub a_h_vec: Vec<f64>,
    #[serde(rename = "b_H")]
    pub b_h_vec: Vec<f64>,

    #[serde(rename = "A_M")]
    pub a_m_mat: Vec<Vec<f64>>,
    #[serde(rename = "B_M")]
    pub b_m_mat: Vec<Vec<f64>>,
    #[serde(rename = "D_M")]
    pub d_m_mat: Vec<Vec<f64>>,
    #[serde(rename = "a_M")]
    pub a_m_vec: Vec<f64>,
    #[serde(rename = "b_M")]
    pub b_m_vec: Vec<f64>,
}

fn is_standard(l: &CouplingLayout) -> bool {
    *l == CouplingLayout::Standard
}

fn matrix(name: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} has ragged rows")));
    }
    if (rows.len(), ncols) != shape {
        return Err(Error::Config(format!(
            "{name} is {}x{}, expected {}x{}",
            rows.len(),
            ncols,
            shape.0,
            shape.1
        )));
    }
    Ok(Matrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

fn vector(name: &str, xs: &[f64], len: usize) -> Result<Vector> {
    if xs.len() != len {
        return Err(Error::Config(format!("{name} has length {}, expected {len}", xs.len())));
    }
    Ok(Vector::from_column_slice(xs))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl GameFile {
    pub fn to_params(&self) -> Result<GameParams> {
        let (dh, dm) = (self.d_h, self.d_m);
        let coupling = |name: &str, rows: &[Vec<f64>], shape: (usize, usize)| match self.coupling_layout {
            CouplingLayout::Standard => matrix(name, rows, shape),
            CouplingLayout::Transposed => matrix(name, rows, (shape.1, shape.0)).map(|m| m.transpose()),
        };
        let human = PlayerCost {
            quad: matrix("A_H", &self.a_h_mat, (dh, dh))?,
            coupling: coupling("B_H", &self.b_h_mat, (dh, dm))?,
            partner_quad: matrix("D_H", &self.d_h_mat, (dm, dm))?,
            linear: vector("a_H", &self.a_h_vec, dh)?,
            partner_linear: vector("b_H", &self.b_h_vec, dm)?,
        };
        let ai = PlayerCost {
            quad: matrix("A_M", &self.a_m_mat, (dm, dm))?,
            coupling: coupling("B_M", &self.b_m_mat, (dm, dh))?,
            partner_quad: matrix("D_M", &self.d_m_mat, (dh, dh))?,
            linear: vector("a_M", &self.a_m_vec, dm)?,
            partner_linear: vector("b_M", &self.b_m_vec, dh)?,
        };
        GameParams::new(human, ai)
    }

    /// Standard-layout file for a game.
    pub fn from_params(p: &GameParams, name: Option<String>) -> Self {
        let (h, m) = (p.human(), p.ai());
        Self {
            name,
            d_h: p.d_h(),
            d_m: p.d_m(),
            coupling_layout: CouplingLayout::Standard,
            a_h_mat: rows_of(&h.quad),
            b_h_mat: rows_of(&h.coupling),
            d_h_mat: rows_of(&h.partner_quad),
            a_h_vec: h.linear.iter().copied().collect(),
            b_h_vec: h.partner_linear.iter().copied().collect(),
            a_m_mat: rows_of(&m.quad),
            b_m_mat: rows_of(&m.coupling),
            d_m_mat: rows_of(&m.partner_quad),
            a_m_vec: m.linear.iter().copied().collect(),
            b_m_vec: m.partner_linear.iter().copied().collect(),
        }
    }
}

pub fn parse_game(text: &str) -> Result<GameFile> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Parses a game file and checks the existence conditions.
pub fn game_from_str(text: &str) -> Result<GameParams> {
    let params = parse_game(text)?.to_params()?;
    params.validate()?;
    Ok(params)
}

pub fn load_game(path: impl AsRef<Path>) -> Result<GameParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    game_from_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn game_to_string(p: &GameParams, name: Option<String>) -> String {
    toml::to_string(&GameFile::from_params(p, name)).expect("game file serializes")
}

pub fn save_game(p: &GameParams, name: Option<String>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, game_to_string(p, name))?;
    Ok(())
}

/// Bundled experiment games by version name: `2x2`, `1x2` or `2x1`.
pub fn bundled(name: &str) -> Result<GameParams> {
    let text = match name {
        "2x2" => BUNDLED_2X2,
        "1x2" => BUNDLED_1X2,
        "2x1" => BUNDLED_2X1,
        other => return Err(Error::invalid(format!("no bundled game named {other:?}"))),
    };
    game_from_str(text)
}

/// A path to a game file, or the name of a bundled game.
pub fn resolve_game(game: &str) -> Result<GameParams> {
    match game {
        "2x2" | "1x2" | "2x1" => bundled(game),
        path => load_game(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse_with_expected_dimensions() {
        for (name, dh, dm) in [("2x2", 2, 2), ("1x2", 1, 2), ("2x1", 2, 1)] {
            let g = bundled(name).unwrap();
            assert_eq!((g.d_h(), g.d_m()), (dh, dm), "{name}");
        }
    }

    #[test]
    fn transposed_layout_is_applied_to_couplings_only() {
        let g = bundled("2x2").unwrap();
        assert_eq!(g.human().coupling[(0, 1)], 0.1182);
        assert_eq!(g.ai().coupling[(0, 1)], 0.2654);
        assert_eq!(g.human().partner_quad[(0, 1)], -0.98);
        let g = bundled("1x2").unwrap();
        assert_eq!(g.human().coupling.shape(), (1, 2));
        assert_eq!(g.ai().coupling.shape(), (2, 1));
    }

    #[test]
    fn listing_orientation_fails_standard_layout_for_rectangular_games() {
        let text = BUNDLED_1X2.replace("coupling_layout = \"transposed\"", "");
        let err = game_from_str(&text).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("B_H")), "{err}");
    }

    #[test]
    fn round_trip_through_text() {
        let g = bundled("2x1").unwrap();
        let text = game_to_string(&g, Some("copy".into()));
        assert!(!text.contains("coupling_layout"));
        assert_eq!(game_from_str(&text).unwrap(), g);
    }

    #[test]
    fn ragged_and_unknown_keys_are_rejected() {
        let text = BUNDLED_2X2.replace("A_H = [[1.0, 0.0], [0.0, 1.0]]", "A_H = [[1.0, 0.0], [0.0]]");
        assert!(matches!(game_from_str(&text), Err(Error::Config(_))));
        let text = format!("{BUNDLED_2X2}\nextra = 1\n");
        assert!(matches!(game_from_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn files_violating_existence_conditions_are_rejected() {
        let text = BUNDLED_2X2.replace("A_H = [[1.0, 0.0], [0.0, 1.0]]", "A_H = [[-1.0, 0.0], [0.0, 1.0]]");
        assert!(matches!(game_from_str(&text), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn decoupled_config_on_disk() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/decoupled.toml");
        let g = load_game(path).unwrap();
        let eq = g.equilibria().unwrap();
        assert_eq!(eq.nash.h.amax(), 0.0);
        assert_eq!(eq.stackelberg.h.amax(), 0.0);
    }
}
