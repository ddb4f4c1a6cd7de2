//! Linking coefficients `(c+, c-, m+, m-)` between yields of two intensity
//! settings for the same photon number.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCoeffs {
    pub c_plus: f64,
    pub c_minus: f64,
    pub m_plus: f64,
    pub m_minus: f64,
}

impl LinkCoeffs {
    /// Forces `Y_n^a = Y_n^b`.
    pub const IDENTITY: LinkCoeffs = LinkCoeffs { c_plus: 0.0, c_minus: 0.0, m_plus: 1.0, m_minus: 1.0 };
}

pub trait CoefficientProvider: Sync {
    fn coefficients(&self, a: &str, b: &str, n: usize, delta_max: f64) -> Result<LinkCoeffs>;

    fn describe(&self) -> String;
}

/// The uncorrelated limit; only valid at `delta_max = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl CoefficientProvider for IdentityProvider {
    fn coefficients(&self, _a: &str, _b: &str, _n: usize, delta_max: f64) -> Result<LinkCoeffs> {
        if delta_max != 0.0 {
            return Err(Error::config(format!(
                "identity coefficients only hold at delta_max = 0 (got {delta_max}); supply a coefficient table"
            )));
        }
        Ok(LinkCoeffs::IDENTITY)
    }

    fn describe(&self) -> String {
        "identity".into()
    }
}

/// The same coefficients for every `(a, b, n)` at any `delta_max`.
#[derive(Debug, Clone, Copy)]
pub struct UniformProvider(pub LinkCoeffs);

impl CoefficientProvider for UniformProvider {
    fn coefficients(&self, _a: &str, _b: &str, _n: usize, _delta_max: f64) -> Result<LinkCoeffs> {
        Ok(self.0)
    }

    fn describe(&self) -> String {
        let c = self.0;
        format!("uniform(c+={}, c-={}, m+={}, m-={})", c.c_plus, c.c_minus, c.m_plus, c.m_minus)
    }
}

/// Exact lookup of externally computed rows `a,b,n,c+,c-,m+,m-`.
#[derive(Debug, Clone, Default)]
pub struct TableProvider {
    rows: HashMap<(String, String, usize), LinkCoeffs>,
}

impl TableProvider {
    pub fn insert(&mut self, a: &str, b: &str, n: usize, coeffs: LinkCoeffs) {
        self.rows.insert((a.to_string(), b.to_string(), n), coeffs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Comma- or whitespace-separated rows; `#` comments and a header row
    /// starting with `a` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = TableProvider::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if i == 0 && fields.first() == Some(&"a") {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            if fields.len() != 7 {
                return Err(bad(format!("expected 7 fields `a,b,n,c+,c-,m+,m-`, got {}", fields.len())));
            }
            let n = fields[2].parse::<usize>().map_err(|_| bad(format!("invalid photon number '{}'", fields[2])))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("invalid number '{s}'")));
            let coeffs = LinkCoeffs {
                c_plus: num(fields[3])?,
                c_minus: num(fields[4])?,
                m_plus: num(fields[5])?,
                m_minus: num(fields[6])?,
            };
            table.insert(fields[0], fields[1], n, coeffs);
        }
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl CoefficientProvider for TableProvider {
    fn coefficients(&self, a: &str, b: &str, n: usize, _delta_max: f64) -> Result<LinkCoeffs> {
        self.rows
            .get(&(a.to_string(), b.to_string(), n))
            .copied()
            .ok_or_else(|| Error::config(format!("coefficient table has no row for ({a}, {b}, {n})")))
    }

    fn describe(&self) -> String {
        format!("table({} rows)", self.rows.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_contract() {
        assert_eq!(IdentityProvider.coefficients("S", "V", 3, 0.0).unwrap(), LinkCoeffs::IDENTITY);
        assert!(matches!(IdentityProvider.coefficients("S", "V", 3, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn table_parsing() {
        let t = TableProvider::parse("a,b,n,c+,c-,m+,m-\nS,V,1,0,0,1,1\nV S 1 0.1 -0.1 1 1 # loose\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.coefficients("S", "V", 1, 0.3).unwrap(), LinkCoeffs::IDENTITY);
        assert_eq!(t.coefficients("V", "S", 1, 0.0).unwrap().c_plus, 0.1);
        assert!(t.coefficients("V", "S", 2, 0.0).is_err());
        let err = TableProvider::parse("S,V,1,0,0,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(matches!(TableProvider::parse("S,V,x,0,0,1,1\n"), Err(Error::Parse { line: 1, .. })));
    }
}
