//! TOML game description files.
//!
//! Matrices are row-major nested arrays. `B`, `Q`, `G` and `h` hold one entry
//! per agent; `R` holds the block matrix `R[v][j]`.

use std::path::Path;

use gnep_core::{LqGame, Matrix, Terminal, Vector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The bundled two-agent scalar example.
pub const EXAMPLE_NAME: &str = "example_eq26";
pub const EXAMPLE_TOML: &str = include_str!("../games/example_eq26.toml");

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub n_x: usize,
    pub n_u: Vec<usize>,
    #[serde(rename = "M")]
    pub agents: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Vec<Rows>,
    #[serde(rename = "Q")]
    pub q: Vec<Rows>,
    pub x_ref: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<Rows>>,
    #[serde(rename = "C_shared")]
    pub c_shared: Rows,
    pub d_shared: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<Rows>,
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub x0: Vec<f64>,
    /// Initial conditions used by sweeps when none are given on the command line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x0_set: Vec<Vec<f64>>,
    /// Linear stage terms `linear_x[v]·x`, zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_x: Option<Vec<Vec<f64>>>,
    /// Linear stage terms `linear_u[v]·u` on the joint input, zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_u: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub terminal: TerminalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSpec {
    None {},
    LinearPenalty { p: Vec<Vec<f64>> },
    TerminalConstraint { x_target: Vec<f64> },
}

impl Default for TerminalSpec {
    fn default() -> Self {
        Self::None {}
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(name: &str, rows: &Rows, nrows: usize, ncols: usize) -> Result<Matrix, CliError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(config(format!("{name} must be {nrows}x{ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<Vector, CliError> {
    if v.len() != len {
        return Err(config(format!("{name} must have length {len}")));
    }
    Ok(Vector::from_column_slice(v))
}

fn rows_of(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn per_agent(name: &str, len: usize, agents: usize) -> Result<(), CliError> {
    if len != agents {
        return Err(config(format!(
            "{name} needs one entry per agent ({agents}), found {len}"
        )));
    }
    Ok(())
}

impl GameFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config(format!("invalid game file: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| config(format!("cannot serialize game: {e}")))
    }

    /// Reads `source`, which is either a path or the bundled example's name.
    pub fn load(source: &str) -> Result<Self, CliError> {
        if source == EXAMPLE_NAME && !Path::new(source).exists() {
            return Self::parse(EXAMPLE_TOML);
        }
        let text =
            std::fs::read_to_string(source).map_err(|e| config(format!("cannot read game file {source}: {e}")))?;
        Self::parse(&text)
    }

    /// Builds and validates the game.
    pub fn to_game(&self) -> Result<LqGame, CliError> {
        let (n, agents) = (self.n_x, self.agents);
        if n == 0 || agents == 0 {
            return Err(config("n_x and M must be positive"));
        }
        per_agent("n_u", self.n_u.len(), agents)?;
        for (name, len) in [
            ("B", self.b.len()),
            ("Q", self.q.len()),
            ("R", self.r.len()),
            ("G", self.g.len()),
            ("h", self.h.len()),
        ] {
            per_agent(name, len, agents)?;
        }
        let m_total: usize = self.n_u.iter().sum();
        let mut b = Vec::with_capacity(agents);
        let mut q = Vec::with_capacity(agents);
        let mut r = Vec::with_capacity(agents);
        let mut g = Vec::with_capacity(agents);
        let mut h = Vec::with_capacity(agents);
        for v in 0..agents {
            let m_v = self.n_u[v];
            b.push(matrix(&format!("B[{v}]"), &self.b[v], n, m_v)?);
            q.push(matrix(&format!("Q[{v}]"), &self.q[v], n, n)?);
            per_agent(&format!("R[{v}]"), self.r[v].len(), agents)?;
            let blocks = (0..agents)
                .map(|j| matrix(&format!("R[{v}][{j}]"), &self.r[v][j], m_v, self.n_u[j]))
                .collect::<Result<Vec<_>, _>>()?;
            r.push(blocks);
            g.push(matrix(&format!("G[{v}]"), &self.g[v], self.g[v].len(), m_v)?);
            h.push(vector(&format!("h[{v}]"), &self.h[v], self.g[v].len())?);
        }
        let linear_x = match &self.linear_x {
            Some(l) => {
                per_agent("linear_x", l.len(), agents)?;
                l.iter().map(|l| vector("linear_x", l, n)).collect::<Result<_, _>>()?
            }
            None => vec![Vector::zeros(n); agents],
        };
        let linear_u = match &self.linear_u {
            Some(l) => {
                per_agent("linear_u", l.len(), agents)?;
                l.iter()
                    .map(|l| vector("linear_u", l, m_total))
                    .collect::<Result<_, _>>()?
            }
            None => vec![Vector::zeros(m_total); agents],
        };
        let terminal = match &self.terminal {
            TerminalSpec::None {} => Terminal::None,
            TerminalSpec::LinearPenalty { p } => {
                per_agent("terminal.p", p.len(), agents)?;
                Terminal::LinearPenalty(p.iter().map(|p| vector("terminal.p", p, n)).collect::<Result<_, _>>()?)
            }
            TerminalSpec::TerminalConstraint { x_target } => {
                Terminal::TerminalConstraint(vector("terminal.x_target", x_target, n)?)
            }
        };
        let game = LqGame {
            a: matrix("A", &self.a, n, n)?,
            b,
            q,
            x_ref: vector("x_ref", &self.x_ref, n)?,
            r,
            c_shared: matrix("C_shared", &self.c_shared, self.c_shared.len(), n + m_total)?,
            d_shared: vector("d_shared", &self.d_shared, self.c_shared.len())?,
            g,
            h,
            horizon: self.horizon,
            x0: vector("x0", &self.x0, n)?,
            terminal,
            linear_x,
            linear_u,
        };
        game.check()?;
        Ok(game)
    }

    /// Initial conditions listed in the file, `x0` when the list is empty.
    pub fn initial_set(&self) -> Vec<Vector> {
        if self.x0_set.is_empty() {
            vec![Vector::from_column_slice(&self.x0)]
        } else {
            self.x0_set.iter().map(|x| Vector::from_column_slice(x)).collect()
        }
    }

    pub fn from_game(game: &LqGame) -> Self {
        let agents = game.agents();
        let any_nonzero = |v: &[Vector]| v.iter().any(|x| x.iter().any(|&c| c != 0.0));
        let as_lists = |v: &[Vector]| v.iter().map(|x| x.iter().copied().collect()).collect();
        Self {
            n_x: game.n_x(),
            n_u: (0..agents).map(|v| game.n_u(v)).collect(),
            agents,
            a: rows_of(&game.a),
            b: game.b.iter().map(rows_of).collect(),
            q: game.q.iter().map(rows_of).collect(),
            x_ref: game.x_ref.iter().copied().collect(),
            r: game.r.iter().map(|row| row.iter().map(rows_of).collect()).collect(),
            c_shared: rows_of(&game.c_shared),
            d_shared: game.d_shared.iter().copied().collect(),
            g: game.g.iter().map(rows_of).collect(),
            h: game.h.iter().map(|h| h.iter().copied().collect()).collect(),
            horizon: game.horizon,
            x0: game.x0.iter().copied().collect(),
            x0_set: Vec::new(),
            linear_x: any_nonzero(&game.linear_x).then(|| as_lists(&game.linear_x)),
            linear_u: any_nonzero(&game.linear_u).then(|| as_lists(&game.linear_u)),
            terminal: match &game.terminal {
                Terminal::None => TerminalSpec::None {},
                Terminal::LinearPenalty(p) => TerminalSpec::LinearPenalty { p: as_lists(p) },
                Terminal::TerminalConstraint(t) => TerminalSpec::TerminalConstraint {
                    x_target: t.iter().copied().collect(),
                },
            },
        }
    }
}

/// Per-agent penalty vectors read from a TOML file with key `p`.
pub fn load_penalty(path: &str, game: &LqGame) -> Result<Vec<Vector>, CliError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct PenaltyFile {
        p: Vec<Vec<f64>>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("cannot read penalty file {path}: {e}")))?;
    let file: PenaltyFile = toml::from_str(&text).map_err(|e| config(format!("invalid penalty file {path}: {e}")))?;
    per_agent("p", file.p.len(), game.agents())?;
    file.p.iter().map(|p| vector("p", p, game.n_x())).collect()
}
