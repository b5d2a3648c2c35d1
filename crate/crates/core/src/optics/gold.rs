use num_complex::Complex64;

use super::OpticsError;

/// Bundled gold optical constants, 700–820 nm.
pub const DEFAULT_GOLD_TABLE: &str = include_str!("../../data/gold_nk.txt");

/// Tabulated complex refractive index, linearly interpolated in wavelength.
///
/// Text format: three whitespace-separated columns `wavelength_nm n k`,
/// lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldTable {
    rows: Vec<(f64, f64, f64)>,
}

impl GoldTable {
    pub fn parse(text: &str) -> Result<Self, OpticsError> {
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| OpticsError::GoldTable {
                line: lineno + 1,
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            }
            let mut vals = [0.0; 3];
            for (v, c) in vals.iter_mut().zip(&cols) {
                *v = c.parse().map_err(|_| err(format!("not a number: {c:?}")))?;
            }
            if !(vals[0] > 0.0) || vals[2] < 0.0 {
                return Err(err("wavelength must be positive and k non-negative".into()));
            }
            if let Some(&(prev, _, _)) = rows.last() {
                if vals[0] <= prev {
                    return Err(err("wavelengths must be strictly increasing".into()));
                }
            }
            rows.push((vals[0], vals[1], vals[2]));
        }
        if rows.len() < 2 {
            return Err(OpticsError::GoldTable {
                line: 0,
                message: "need at least two rows".into(),
            });
        }
        Ok(Self { rows })
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_GOLD_TABLE).expect("bundled table is valid")
    }

    pub fn range_nm(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    pub fn index_at(&self, wavelength_nm: f64) -> Result<Complex64, OpticsError> {
        let (lo, hi) = self.range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(OpticsError::OutOfTable(wavelength_nm));
        }
        let k = self
            .rows
            .partition_point(|r| r.0 <= wavelength_nm)
            .clamp(1, self.rows.len() - 1);
        let (w0, n0, k0) = self.rows[k - 1];
        let (w1, n1, k1) = self.rows[k];
        let f = (wavelength_nm - w0) / (w1 - w0);
        Ok(Complex64::new(n0 + f * (n1 - n0), k0 + f * (k1 - k0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_interpolates() {
        let t = GoldTable::bundled();
        assert_eq!(t.range_nm(), (700.0, 820.0));
        let at = t.index_at(700.0).unwrap();
        assert_eq!(at, Complex64::new(0.131, 4.04));
        let mid = t.index_at(705.0).unwrap();
        assert!((mid.im - 4.085).abs() < 1e-12);
        assert_eq!(t.index_at(820.0).unwrap(), Complex64::new(0.157, 5.08));
        assert!(t.index_at(699.0).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = GoldTable::parse("# header\n700 0.1 4.0\n710 0.1\n").unwrap_err();
        assert_eq!(
            err,
            OpticsError::GoldTable {
                line: 3,
                message: "expected 3 columns, found 2".into()
            }
        );
        assert!(GoldTable::parse("700 0.1 4\n690 0.1 4\n").is_err());
    }
}
