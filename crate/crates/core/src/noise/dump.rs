use std::io::{BufRead, Write};

use super::{Jump, NoisePath};
use crate::error::{Error, Result};

const MAGIC: &str = "noisepath";
pub const DUMP_VERSION: u32 = 1;

struct Lines<L> {
    inner: L,
    line: usize,
}

impl<L: Iterator<Item = std::io::Result<String>>> Lines<L> {
    fn next_line(&mut self) -> Result<(usize, String)> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(s)) => Ok((self.line, s)),
            Some(Err(e)) => Err(Error::Format(e.to_string())),
            None => Err(Error::Format("unexpected end of dump".into())),
        }
    }

    fn field(&mut self, key: &str) -> Result<(usize, String)> {
        let (n, line) = self.next_line()?;
        match line.split_once(',') {
            Some((k, v)) if k == key => Ok((n, v.to_string())),
            _ => Err(fmt_err(n, format!("expected `{key}`"))),
        }
    }
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

impl NoisePath {
    /// Write the versioned text dump. Floats use the shortest representation
    /// that parses back to the same value, so a round trip is bitwise.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC},{DUMP_VERSION}")?;
        writeln!(w, "horizon,{}", self.horizon)?;
        writeln!(w, "seed,{}", self.seed)?;
        writeln!(w, "spec_hash,{}", self.spec_hash)?;
        writeln!(w, "aux_budget,{}", self.aux_budget)?;
        writeln!(w, "dropped_abs_mass,{}", self.dropped_abs_mass)?;
        let refs: Vec<String> = self.refinements.iter().map(|(f, s)| format!("{f}:{s}")).collect();
        writeln!(w, "refinements,{}", refs.join(";"))?;
        writeln!(w, "grid,{}", self.grid.len())?;
        for (t, b) in self.grid.iter().zip(&self.brownian) {
            writeln!(w, "{t},{b}")?;
        }
        let base: Vec<String> = self.base.iter().map(usize::to_string).collect();
        writeln!(w, "base,{}", base.join(";"))?;
        writeln!(w, "jumps,{}", self.jumps.len())?;
        for (j, ix) in self.jumps.iter().zip(&self.jump_index) {
            writeln!(w, "{},{},{},{}", j.time, j.mark, j.aux, ix)?;
        }
        writeln!(w, "end")
    }

    pub fn to_dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<NoisePath> {
        let mut rd = Lines { inner: r.lines(), line: 0 };
        fn num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T> {
            s.trim().parse().map_err(|_| fmt_err(n, format!("bad number `{s}`")))
        }

        let (n, version) = rd.field(MAGIC)?;
        if num::<u32>(n, &version)? != DUMP_VERSION {
            return Err(fmt_err(n, format!("unsupported version {version}")));
        }
        let (n, v) = rd.field("horizon")?;
        let horizon = num(n, &v)?;
        let (n, v) = rd.field("seed")?;
        let seed = num(n, &v)?;
        let (_, spec_hash) = rd.field("spec_hash")?;
        let (n, v) = rd.field("aux_budget")?;
        let aux_budget = num(n, &v)?;
        let (n, v) = rd.field("dropped_abs_mass")?;
        let dropped_abs_mass = num(n, &v)?;
        let (n, v) = rd.field("refinements")?;
        let mut refinements = Vec::new();
        for item in v.split(';').filter(|s| !s.is_empty()) {
            let (f, s) = item.split_once(':').ok_or_else(|| fmt_err(n, "bad refinement"))?;
            refinements.push((num(n, f)?, num(n, s)?));
        }
        let (n, v) = rd.field("grid")?;
        let len: usize = num(n, &v)?;
        let mut grid = Vec::with_capacity(len);
        let mut brownian = Vec::with_capacity(len);
        for _ in 0..len {
            let (n, line) = rd.next_line()?;
            let (t, b) = line.split_once(',').ok_or_else(|| fmt_err(n, "expected `t,B`"))?;
            grid.push(num(n, t)?);
            brownian.push(num(n, b)?);
        }
        let (n, v) = rd.field("base")?;
        let base = v.split(';').filter(|s| !s.is_empty()).map(|s| num(n, s)).collect::<Result<_>>()?;
        let (n, v) = rd.field("jumps")?;
        let count: usize = num(n, &v)?;
        let mut jumps = Vec::with_capacity(count);
        let mut jump_index = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = rd.next_line()?;
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(fmt_err(n, "expected `time,mark,aux,index`"));
            }
            jumps.push(Jump { time: num(n, parts[0])?, mark: num(n, parts[1])?, aux: num(n, parts[2])? });
            jump_index.push(num(n, parts[3])?);
        }
        let (n, line) = rd.next_line()?;
        if line != "end" {
            return Err(fmt_err(n, "expected `end`"));
        }
        let path = NoisePath {
            horizon,
            grid,
            brownian,
            base,
            jumps,
            jump_index,
            seed,
            spec_hash,
            aux_budget,
            dropped_abs_mass,
            refinements,
        };
        path.validate()?;
        Ok(path)
    }

    /// Structural invariants: increasing grid from 0 to the horizon, jump
    /// times increasing in `(0, T]` and present on the grid.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Format(m.to_string()));
        if self.grid.len() < 2 || self.grid.len() != self.brownian.len() {
            return bad("grid and Brownian values must have equal length >= 2");
        }
        if self.grid[0] != 0.0 || *self.grid.last().unwrap() != self.horizon {
            return bad("grid must run from 0 to the horizon");
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return bad("grid must be strictly increasing");
        }
        if self.jumps.len() != self.jump_index.len() {
            return bad("jump index length mismatch");
        }
        if !self.jumps.windows(2).all(|w| w[0].time < w[1].time) {
            return bad("jump times must be strictly increasing");
        }
        for (j, &ix) in self.jumps.iter().zip(&self.jump_index) {
            if ix == 0 || ix >= self.grid.len() || self.grid[ix] != j.time {
                return bad("jump time is not on the grid");
            }
        }
        if self.base.iter().any(|&i| i >= self.grid.len()) {
            return bad("base index out of range");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::IntensityMeasure;
    use crate::noise::sample_noise;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dump_round_trip_is_bitwise(seed in any::<u64>(), refine in any::<bool>()) {
            let m = IntensityMeasure::exponential_claims(3.0, 0.5);
            let mut n = sample_noise(&m, 1.5, 0.07, seed).unwrap();
            if refine {
                n = n.refine(3, seed ^ 1).unwrap();
            }
            let text = n.to_dump_string();
            let back = NoisePath::read_dump(text.as_bytes()).unwrap();
            prop_assert_eq!(back.grid.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            n.grid.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back, n);
        }
    }

    #[test]
    fn rejects_wrong_version_and_truncation() {
        let n = sample_noise(&IntensityMeasure::atom(-1.0, 1.0), 1.0, 0.25, 4).unwrap();
        let text = n.to_dump_string();
        let v2 = text.replacen("noisepath,1", "noisepath,2", 1);
        assert!(matches!(NoisePath::read_dump(v2.as_bytes()), Err(Error::Format(_))));
        let cut = &text[..text.len() - 4];
        assert!(NoisePath::read_dump(cut.as_bytes()).is_err());
    }
}
