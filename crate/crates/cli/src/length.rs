//! Length literals: plain decimals or exact rational multiples of π.

use ringchain_core::commensurate::PiRatio;
use ringchain_core::Length;

/// Accepts `1.25`, `pi`, `3pi`, `4/11pi`, `4/11*pi` and `pi/2`.
pub fn parse_length(s: &str) -> Result<Length, String> {
    let t: String = s
        .trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    if let Some(pos) = t.find("pi") {
        let (head, tail) = (&t[..pos], &t[pos + 2..]);
        let head = head.strip_suffix('*').unwrap_or(head);
        let (mut p, mut q) = match head {
            "" => (1, 1),
            h => parse_fraction(h).ok_or_else(|| format!("bad multiple of pi: {s}"))?,
        };
        if !tail.is_empty() {
            let d = tail
                .strip_prefix('/')
                .and_then(|d| d.parse::<u64>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| format!("bad multiple of pi: {s}"))?;
            q *= d;
        }
        if q == 0 {
            return Err(format!("zero denominator in {s}"));
        }
        let g = ringchain_core::commensurate::gcd(p, q).max(1);
        p /= g;
        q /= g;
        return PiRatio::new(p, q)
            .map(Length::Pi)
            .ok_or_else(|| format!("bad multiple of pi: {s}"));
    }
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Length::Value)
        .ok_or_else(|| format!("not a length: {s}"))
}

fn parse_fraction(s: &str) -> Option<(u64, u64)> {
    match s.split_once('/') {
        Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

/// Inverse of [`parse_length`] for headers and config echoes.
pub fn format_length(l: &Length) -> String {
    match l {
        Length::Value(v) => format!("{v}"),
        Length::Pi(r) if r.q == 1 && r.p == 1 => "pi".to_string(),
        Length::Pi(r) if r.q == 1 => format!("{}pi", r.p),
        Length::Pi(r) => format!("{}/{}pi", r.p, r.q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(s: &str) -> (u64, u64) {
        match parse_length(s).unwrap() {
            Length::Pi(r) => (r.p, r.q),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pi_literals() {
        assert_eq!(ratio("pi"), (1, 1));
        assert_eq!(ratio("2pi"), (2, 1));
        assert_eq!(ratio("4/11pi"), (4, 11));
        assert_eq!(ratio("8/22*pi"), (4, 11));
        assert_eq!(ratio("pi/3"), (1, 3));
        assert_eq!(ratio(" 1/5 PI "), (1, 5));
    }

    #[test]
    fn decimals_and_errors() {
        assert_eq!(parse_length("0.5").unwrap(), Length::Value(0.5));
        assert_eq!(parse_length("1e-3").unwrap(), Length::Value(1e-3));
        for bad in ["", "x", "1/0pi", "pi/0", "a/bpi", "inf"] {
            assert!(parse_length(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn format_round_trip() {
        for s in ["pi", "3pi", "4/11pi", "0.25"] {
            let l = parse_length(s).unwrap();
            assert_eq!(format_length(&l), s);
            assert_eq!(parse_length(&format_length(&l)).unwrap(), l);
        }
    }
}
