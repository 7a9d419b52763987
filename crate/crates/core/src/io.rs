//! Draw persistence and posterior summaries.
//!
//! Draws container layout (all integers and floats little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic | 8 bytes `SHRVDRAW` |
//! | version | u32 (= 1) |
//! | m, p | u64, u64 |
//! | intercept | u8 (0 or 1) |
//! | n_draws | u64 |
//! | hyper_phi_names, hyper_l_names | u64 count, then per name u64 byte length + UTF-8 |
//! | phi | n_draws x n f64, draw-major, each row vec(Phi) |
//! | l | n_draws x n_l f64 |
//! | sv | n_draws x M x (mu, rho, sigma) f64 |
//! | h_last | n_draws x M f64 |
//! | hyper_phi, hyper_l | n_draws x (count) f64 |
//! | sv_acceptance | M x (sigma, mu/rho) f64 |

use crate::error::{Error, Result};
use crate::forecast::{fmt_f64, parse_f64};
use crate::model::VarSpec;
use crate::sampler::PosteriorDraws;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const DRAWS_MAGIC: &[u8; 8] = b"SHRVDRAW";
pub const DRAWS_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_names(out: &mut Vec<u8>, names: &[String]) {
    put_u64(out, names.len() as u64);
    for n in names {
        put_u64(out, n.len() as u64);
        out.extend_from_slice(n.as_bytes());
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_draws(d: &PosteriorDraws) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * (d.phi.len() + d.l.len() + d.sv.len() + d.h_last.len() + d.hyper_phi.len() + d.hyper_l.len()));
    out.extend_from_slice(DRAWS_MAGIC);
    out.extend_from_slice(&DRAWS_VERSION.to_le_bytes());
    put_u64(&mut out, d.spec.m as u64);
    put_u64(&mut out, d.spec.p as u64);
    out.push(d.spec.intercept as u8);
    put_u64(&mut out, d.n_draws as u64);
    put_names(&mut out, &d.hyper_phi_names);
    put_names(&mut out, &d.hyper_l_names);
    put_f64s(&mut out, &d.phi);
    put_f64s(&mut out, &d.l);
    put_f64s(&mut out, &d.sv);
    put_f64s(&mut out, &d.h_last);
    put_f64s(&mut out, &d.hyper_phi);
    put_f64s(&mut out, &d.hyper_l);
    let acc: Vec<f64> = d.sv_acceptance.iter().flat_map(|(a, b)| [*a, *b]).collect();
    put_f64s(&mut out, &acc);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Container(format!("truncated while reading {what} at byte {}", self.pos))),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::Container(format!("{what} = {v} does not fit in memory")))
    }

    fn names(&mut self, what: &str) -> Result<Vec<String>> {
        let n = self.usize(what)?;
        if n > self.buf.len() {
            return Err(Error::Container(format!("implausible {what} count {n}")));
        }
        (0..n)
            .map(|_| {
                let len = self.usize(what)?;
                let bytes = self.take(len, what)?;
                String::from_utf8(bytes.to_vec()).map_err(|_| Error::Container(format!("{what} is not UTF-8")))
            })
            .collect()
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = count.checked_mul(8).ok_or_else(|| Error::Container(format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_draws(buf: &[u8]) -> Result<PosteriorDraws> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != DRAWS_MAGIC {
        return Err(Error::Container("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
    if version != DRAWS_VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let m = r.usize("m")?;
    let p = r.usize("p")?;
    let intercept = match r.take(1, "intercept")?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::Container(format!("intercept flag {b}"))),
    };
    let spec = VarSpec::new(m, p, intercept).map_err(|e| Error::Container(format!("bad dimensions: {e}")))?;
    let n_draws = r.usize("n_draws")?;
    let hyper_phi_names = r.names("hyper_phi_names")?;
    let hyper_l_names = r.names("hyper_l_names")?;
    let sz = |per: usize| n_draws.checked_mul(per).ok_or_else(|| Error::Container("section size overflows".into()));
    let phi = r.f64s(sz(spec.n())?, "phi")?;
    let l = r.f64s(sz(spec.n_l())?, "l")?;
    let sv = r.f64s(sz(3 * m)?, "sv")?;
    let h_last = r.f64s(sz(m)?, "h_last")?;
    let hyper_phi = r.f64s(sz(hyper_phi_names.len())?, "hyper_phi")?;
    let hyper_l = r.f64s(sz(hyper_l_names.len())?, "hyper_l")?;
    let acc = r.f64s(2 * m, "sv_acceptance")?;
    if r.pos != buf.len() {
        return Err(Error::Container(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(PosteriorDraws {
        spec,
        n_draws,
        phi,
        l,
        sv,
        h_last,
        hyper_phi_names,
        hyper_phi,
        hyper_l_names,
        hyper_l,
        sv_acceptance: acc.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
    })
}

pub fn write_draws(path: &Path, d: &PosteriorDraws) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_draws(d))?;
    w.flush()?;
    Ok(())
}

pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    decode_draws(&fs::read(path)?)
}

/// Regressor labels in row order: `lag{l}.{var}`, then `const`.
pub fn regressor_names(spec: &VarSpec, vars: &[String]) -> Vec<String> {
    let mut out: Vec<String> = (0..spec.m * spec.p).map(|r| format!("lag{}.{}", r / spec.m + 1, vars[r % spec.m])).collect();
    if spec.intercept {
        out.push("const".into());
    }
    out
}

/// Names of every scalar summarized, in storage order.
pub fn parameter_names(d: &PosteriorDraws, vars: &[String]) -> Result<Vec<String>> {
    let spec = d.spec;
    if vars.len() != spec.m {
        return Err(Error::Dimension(format!("{} variable names for M = {}", vars.len(), spec.m)));
    }
    let regs = regressor_names(&spec, vars);
    let mut out = Vec::new();
    for eq in 0..spec.m {
        for r in &regs {
            out.push(format!("phi.{}.{}", vars[eq], r));
        }
    }
    for j in 1..spec.m {
        for i in 0..j {
            out.push(format!("l.{}.{}", vars[i], vars[j]));
        }
    }
    for v in vars {
        for p in ["mu", "rho", "sigma"] {
            out.push(format!("sv.{p}.{v}"));
        }
    }
    out.extend(d.hyper_phi_names.iter().map(|n| format!("hyper.phi.{n}")));
    out.extend(d.hyper_l_names.iter().map(|n| format!("hyper.l.{n}")));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub rows: Vec<SummaryRow>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(x: &[f64], q: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    x[lo] + (h - lo as f64) * (x[hi] - x[lo])
}

fn summarize_column(name: String, mut x: Vec<f64>) -> SummaryRow {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 { (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    x.sort_by(f64::total_cmp);
    SummaryRow { name, mean, sd, q05: quantile_sorted(&x, 0.05), median: quantile_sorted(&x, 0.5), q95: quantile_sorted(&x, 0.95) }
}

impl PosteriorSummary {
    pub fn from_draws(d: &PosteriorDraws, vars: &[String]) -> Result<Self> {
        if d.n_draws == 0 {
            return Err(Error::EmptyInput("posterior draws".into()));
        }
        let names = parameter_names(d, vars)?;
        let (n, nl, m) = (d.spec.n(), d.spec.n_l(), d.spec.m);
        let (nhp, nhl) = (d.hyper_phi_names.len(), d.hyper_l_names.len());
        let column = |k: usize| -> Vec<f64> {
            (0..d.n_draws)
                .map(|s| {
                    if k < n {
                        d.phi[s * n + k]
                    } else if k < n + nl {
                        d.l[s * nl + k - n]
                    } else if k < n + nl + 3 * m {
                        d.sv[s * 3 * m + k - n - nl]
                    } else if k < n + nl + 3 * m + nhp {
                        d.hyper_phi[s * nhp + k - n - nl - 3 * m]
                    } else {
                        d.hyper_l[s * nhl + k - n - nl - 3 * m - nhp]
                    }
                })
                .collect()
        };
        let rows = names.into_iter().enumerate().map(|(k, name)| summarize_column(name, column(k))).collect();
        Ok(PosteriorSummary { rows })
    }

    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Header `parameter,mean,sd,q05,median,q95`; numbers carry 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "mean", "sd", "q05", "median", "q95"])?;
        for r in &self.rows {
            w.write_record([r.name.clone(), fmt_f64(r.mean), fmt_f64(r.sd), fmt_f64(r.q05), fmt_f64(r.median), fmt_f64(r.q95)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != ["parameter", "mean", "sd", "q05", "median", "q95"] {
            return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: format!("unexpected header {header:?}") });
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != 6 {
                return Err(Error::Parse { path: path.to_path_buf(), line, message: format!("{} fields, expected 6", rec.len()) });
            }
            let num = |k: usize| parse_f64(&rec[k]).map_err(|e| Error::Parse { path: path.to_path_buf(), line, message: e.to_string() });
            rows.push(SummaryRow { name: rec[0].to_string(), mean: num(1)?, sd: num(2)?, q05: num(3)?, median: num(4)?, q95: num(5)? });
        }
        Ok(PosteriorSummary { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> PosteriorDraws {
        let spec = VarSpec::new(2, 1, true).unwrap();
        let mut d = PosteriorDraws::empty(spec, vec!["lambda[own]".into()], vec![]);
        for s in 0..5 {
            let f = s as f64;
            d.phi.extend((0..spec.n()).map(|j| f * 0.1 + j as f64 / 7.0));
            d.l.push(-f / 3.0);
            d.sv.extend([f, 0.9, 0.1, -f, 0.8, 0.2]);
            d.h_last.extend([f.sin(), f.cos()]);
            d.hyper_phi.push(1.0 / (f + 1.0));
            d.n_draws += 1;
        }
        d.sv_acceptance = vec![(0.5, 0.25), (0.75, 1.0 / 3.0)];
        d
    }

    #[test]
    fn container_round_trip_is_exact() {
        let d = toy();
        let back = decode_draws(&encode_draws(&d)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn container_rejects_corruption() {
        let bytes = encode_draws(&toy());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_draws(&bad), Err(Error::Container(_))));
        assert!(matches!(decode_draws(&bytes[..bytes.len() - 3]), Err(Error::Container(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_draws(&long), Err(Error::Container(_))));
        let mut ver = bytes;
        ver[8] = 9;
        assert!(matches!(decode_draws(&ver), Err(Error::Container(_))));
    }

    #[test]
    fn names_and_quantiles() {
        let d = toy();
        let vars = vec!["gdp".to_string(), "cpi".to_string()];
        let names = parameter_names(&d, &vars).unwrap();
        assert_eq!(names[0], "phi.gdp.lag1.gdp");
        assert_eq!(names[2], "phi.gdp.const");
        assert_eq!(names[6], "l.gdp.cpi");
        assert_eq!(names.last().unwrap(), "hyper.phi.lambda[own]");
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert!((quantile_sorted(&[1.0, 2.0], 0.05) - 1.05).abs() < 1e-15);
        let s = PosteriorSummary::from_draws(&d, &vars).unwrap();
        assert_eq!(s.rows.len(), names.len());
        let l = s.get("l.gdp.cpi").unwrap();
        assert!((l.mean + 2.0 / 3.0).abs() < 1e-15 && (l.median + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn summary_csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = PosteriorSummary::from_draws(&toy(), &["a".to_string(), "b".to_string()]).unwrap();
        s.write_csv(&p).unwrap();
        let back = PosteriorSummary::read_csv(&p).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.rows.iter().zip(&s.rows) {
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.q95.to_bits(), b.q95.to_bits());
        }
    }
}
