//! Text form of a degradation spec.
//!
//! ```text
//! time = 2                      # 1-based acquisition
//! kind = cloud                  # cloud | diagonal-stripes | vertical-stripes
//! ellipse = 30, 36, 12, 11      # row, col, row radius, col radius
//! polygon = 2 2; 2 9; 8 5       # (row col) vertices
//! ```
//!
//! Stripes take `period`, `width`, `angle`, `offset` or `count`,
//! `min_width`, `max_width`, `seed`. Region coordinates are 0-based pixel units.

use std::fmt::Write as _;

use crate::degrade::{Degradation, DegradationSpec, Region};
use crate::error::{Error, Result};

fn parse_f64s(key: &str, value: &str, sep: char) -> Result<Vec<f64>> {
    value
        .split(sep)
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid number {s:?} in {key}")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(fields: &[(String, String)], key: &str, default: Option<T>) -> Result<T> {
    match fields.iter().rev().find(|(k, _)| k == key) {
        Some((_, v)) => v
            .parse()
            .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}"))),
        None => default.ok_or_else(|| Error::Config(format!("missing key {key}"))),
    }
}

/// `default_seed` is used for vertical stripes without a `seed` key.
pub fn parse_degradation_spec(text: &str, default_seed: u64) -> Result<DegradationSpec> {
    let mut fields = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        fields.push((k.trim().to_string(), v.trim().to_string()));
    }
    let kind_name: String = field(&fields, "kind", None)?;
    let allowed: &[&str] = match kind_name.as_str() {
        "cloud" => &["ellipse", "polygon"],
        "diagonal-stripes" => &["period", "width", "angle", "offset"],
        "vertical-stripes" => &["count", "min_width", "max_width", "seed"],
        other => return Err(Error::Config(format!("unknown degradation kind {other:?}"))),
    };
    for (k, _) in &fields {
        if k != "kind" && k != "time" && !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown key {k} for kind {kind_name}")));
        }
    }
    let time: usize = field(&fields, "time", None)?;
    if time == 0 {
        return Err(Error::Config("time is 1-based".into()));
    }
    let kind = match kind_name.as_str() {
        "cloud" => {
            let mut regions = Vec::new();
            for (k, v) in &fields {
                match k.as_str() {
                    "ellipse" => {
                        let p = parse_f64s(k, v, ',')?;
                        if p.len() != 4 {
                            return Err(Error::Config(format!("ellipse needs 4 numbers, got {v:?}")));
                        }
                        regions.push(Region::Ellipse {
                            row: p[0],
                            col: p[1],
                            row_radius: p[2],
                            col_radius: p[3],
                        });
                    }
                    "polygon" => {
                        let vertices = v
                            .split(';')
                            .map(|pair| {
                                let p = parse_f64s(k, pair.trim(), ' ')
                                    .map(|p| p.into_iter().collect::<Vec<_>>())?;
                                match p[..] {
                                    [r, c] => Ok((r, c)),
                                    _ => Err(Error::Config(format!("polygon vertex {pair:?} needs row and col"))),
                                }
                            })
                            .collect::<Result<Vec<_>>>()?;
                        if vertices.len() < 3 {
                            return Err(Error::Config("polygon needs at least 3 vertices".into()));
                        }
                        regions.push(Region::Polygon(vertices));
                    }
                    _ => {}
                }
            }
            if regions.is_empty() {
                return Err(Error::Config("cloud needs at least one ellipse or polygon".into()));
            }
            Degradation::Cloud(regions)
        }
        "diagonal-stripes" => Degradation::DiagonalStripes {
            period: field(&fields, "period", None)?,
            width: field(&fields, "width", None)?,
            angle: field(&fields, "angle", Some(45.0))?,
            offset: field(&fields, "offset", Some(0.0))?,
        },
        _ => Degradation::VerticalStripes {
            count: field(&fields, "count", None)?,
            min_width: field(&fields, "min_width", Some(1))?,
            max_width: field(&fields, "max_width", None)?,
            seed: field(&fields, "seed", Some(default_seed))?,
        },
    };
    Ok(DegradationSpec { kind, time: time - 1 })
}

pub fn format_degradation_spec(spec: &DegradationSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "time = {}", spec.time + 1);
    match &spec.kind {
        Degradation::Cloud(regions) => {
            let _ = writeln!(out, "kind = cloud");
            for r in regions {
                match r {
                    Region::Ellipse {
                        row,
                        col,
                        row_radius,
                        col_radius,
                    } => {
                        let _ = writeln!(out, "ellipse = {row}, {col}, {row_radius}, {col_radius}");
                    }
                    Region::Polygon(v) => {
                        let pts: Vec<String> = v.iter().map(|(r, c)| format!("{r} {c}")).collect();
                        let _ = writeln!(out, "polygon = {}", pts.join("; "));
                    }
                }
            }
        }
        Degradation::DiagonalStripes {
            period,
            width,
            angle,
            offset,
        } => {
            let _ = writeln!(out, "kind = diagonal-stripes");
            let _ = writeln!(out, "period = {period}\nwidth = {width}\nangle = {angle}\noffset = {offset}");
        }
        Degradation::VerticalStripes {
            count,
            min_width,
            max_width,
            seed,
        } => {
            let _ = writeln!(out, "kind = vertical-stripes");
            let _ = writeln!(out, "count = {count}\nmin_width = {min_width}\nmax_width = {max_width}\nseed = {seed}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_with_both_regions() {
        let spec = parse_degradation_spec(
            "time = 2\nkind = cloud\nellipse = 30, 36, 12, 11  # main\npolygon = 2 2; 2 9; 8 5\n",
            0,
        )
        .unwrap();
        assert_eq!(spec.time, 1);
        assert_eq!(
            spec.kind,
            Degradation::Cloud(vec![
                Region::Ellipse {
                    row: 30.0,
                    col: 36.0,
                    row_radius: 12.0,
                    col_radius: 11.0
                },
                Region::Polygon(vec![(2.0, 2.0), (2.0, 9.0), (8.0, 5.0)]),
            ])
        );
        assert_eq!(parse_degradation_spec(&format_degradation_spec(&spec), 0).unwrap(), spec);
    }

    #[test]
    fn stripes_defaults_and_roundtrip() {
        let d = parse_degradation_spec("time = 1\nkind = diagonal-stripes\nperiod = 10\nwidth = 2", 0).unwrap();
        assert_eq!(
            d.kind,
            Degradation::DiagonalStripes {
                period: 10.0,
                width: 2.0,
                angle: 45.0,
                offset: 0.0
            }
        );
        let v = parse_degradation_spec("time = 4\nkind = vertical-stripes\ncount = 3\nmax_width = 2", 17).unwrap();
        assert_eq!(
            v.kind,
            Degradation::VerticalStripes {
                count: 3,
                min_width: 1,
                max_width: 2,
                seed: 17
            }
        );
        for s in [d, v] {
            assert_eq!(parse_degradation_spec(&format_degradation_spec(&s), 0).unwrap(), s);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        for text in [
            "kind = cloud\nellipse = 1,1,1,1",
            "time = 0\nkind = cloud\nellipse = 1,1,1,1",
            "time = 1\nkind = smoke",
            "time = 1\nkind = cloud",
            "time = 1\nkind = cloud\nellipse = 1,1,1",
            "time = 1\nkind = cloud\npolygon = 1 1; 2 2",
            "time = 1\nkind = cloud\nperiod = 3\nellipse = 1,1,1,1",
            "time = 1\nkind = diagonal-stripes\nwidth = 2",
        ] {
            assert!(parse_degradation_spec(text, 0).is_err(), "{text}");
        }
    }
}
