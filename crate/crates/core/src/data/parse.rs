use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::RatingTriple;
use crate::error::{Error, Result};

/// Ratings read from a MovieLens-style file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRatings {
    pub triples: Vec<RatingTriple>,
    pub num_users: usize,
    pub num_items: usize,
    /// Rating scale size K.
    pub scale: usize,
    /// Repeated (user, item) pairs that were overwritten.
    pub duplicates: usize,
    /// Half-star rescaling was requested but every rating was already whole,
    /// so only even values occur.
    pub rescaled_whole_ratings: bool,
}

/// Parses `user<sep>item<sep>rating<sep>timestamp` lines.
///
/// With `rescale_half_stars`, a rating `r` on the 0.5..5.0 half-star scale
/// becomes the integer `2r` on a 10-point scale. Without it, ratings must be
/// whole numbers and K is the largest one observed.
pub fn parse_movielens(path: impl AsRef<Path>, separator: &str, rescale_half_stars: bool) -> Result<ParsedRatings> {
    let text = fs::read_to_string(path)?;
    parse_movielens_str(&text, separator, rescale_half_stars)
}

pub fn parse_movielens_str(text: &str, separator: &str, rescale_half_stars: bool) -> Result<ParsedRatings> {
    assert!(!separator.is_empty(), "separator must be nonempty");
    let mut triples: Vec<RatingTriple> = Vec::new();
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut duplicates = 0usize;
    let mut any_half = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(separator).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields separated by {separator:?}, found {}", fields.len()),
            });
        }
        let user_id = parse_id(fields[0], "user id", line_no)?;
        let item_id = parse_id(fields[1], "item id", line_no)?;
        let value: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("rating {:?} is not a number", fields[2]),
        })?;
        let timestamp = parse_timestamp(fields[3], line_no)?;

        let out_of_scale = || Error::RatingOutOfScale {
            line: line_no,
            rating: fields[2].trim().to_string(),
        };
        let rating = if rescale_half_stars {
            let doubled = value * 2.0;
            if doubled.fract() != 0.0 || !(1.0..=10.0).contains(&doubled) {
                return Err(out_of_scale());
            }
            if value.fract() != 0.0 {
                any_half = true;
            }
            doubled as u8
        } else {
            if value.fract() != 0.0 || !(1.0..=255.0).contains(&value) {
                return Err(out_of_scale());
            }
            value as u8
        };

        let triple = RatingTriple {
            user_id,
            item_id,
            rating,
            timestamp,
        };
        match seen.get(&(user_id, item_id)) {
            Some(&pos) => {
                duplicates += 1;
                triples[pos] = triple;
            }
            None => {
                seen.insert((user_id, item_id), triples.len());
                triples.push(triple);
            }
        }
    }

    if triples.is_empty() {
        return Err(Error::Empty("rating file contains no ratings".into()));
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate (user, item) ratings, keeping the last occurrence");
    }
    let rescaled_whole_ratings = rescale_half_stars && !any_half;
    if rescaled_whole_ratings {
        log::warn!("half-star rescaling applied to whole-star ratings: only even values of the 10-point scale occur");
    }

    let scale = if rescale_half_stars {
        10
    } else {
        triples.iter().map(|t| t.rating as usize).max().unwrap_or(1)
    };
    let num_users = seen.keys().map(|k| k.0).collect::<std::collections::HashSet<_>>().len();
    let num_items = seen.keys().map(|k| k.1).collect::<std::collections::HashSet<_>>().len();

    Ok(ParsedRatings {
        triples,
        num_users,
        num_items,
        scale,
        duplicates,
        rescaled_whole_ratings,
    })
}

fn parse_id(field: &str, what: &str, line: usize) -> Result<u64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} {field:?} is not a non-negative integer"),
    })
}

fn parse_timestamp(field: &str, line: usize) -> Result<i64> {
    let f = field.trim();
    if let Ok(v) = f.parse::<i64>() {
        return Ok(v);
    }
    match f.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
        _ => Err(Error::Parse {
            line,
            message: format!("timestamp {field:?} is not an integer"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_1m_line() {
        let p = parse_movielens_str("1::1193::5::978300760\n", "::", false).unwrap();
        assert_eq!(
            p.triples,
            vec![RatingTriple {
                user_id: 1,
                item_id: 1193,
                rating: 5,
                timestamp: 978300760
            }]
        );
        assert_eq!((p.num_users, p.num_items, p.scale), (1, 1, 5));
    }

    #[test]
    fn half_star_rescaling() {
        let p = parse_movielens_str("1::2::4.5::0\n1::3::0.5::0\n2::2::5::0\n", "::", true).unwrap();
        let r: Vec<u8> = p.triples.iter().map(|t| t.rating).collect();
        assert_eq!(r, vec![9, 1, 10]);
        assert_eq!(p.scale, 10);
        assert!(!p.rescaled_whole_ratings);
    }

    #[test]
    fn rescaling_whole_ratings_is_flagged() {
        let p = parse_movielens_str("1::2::4::0\n1::3::1::0\n", "::", true).unwrap();
        assert!(p.rescaled_whole_ratings);
        assert!(p.triples.iter().all(|t| t.rating % 2 == 0));
    }

    #[test]
    fn tab_separated() {
        let p = parse_movielens_str("196\t242\t3\t881250949\n186\t302\t3\t891717742\n", "\t", false).unwrap();
        assert_eq!(p.triples.len(), 2);
        assert_eq!(p.num_users, 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_movielens_str("1::2::3::4\n1::2::3\n", "::", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_movielens_str("1::2::3::4\n\nx::2::3::4\n", "::", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn out_of_scale_ratings() {
        assert!(matches!(
            parse_movielens_str("1::2::0::4\n", "::", false),
            Err(Error::RatingOutOfScale { line: 1, .. })
        ));
        assert!(matches!(
            parse_movielens_str("1::2::3.5::4\n", "::", false),
            Err(Error::RatingOutOfScale { .. })
        ));
        assert!(matches!(
            parse_movielens_str("1::2::5.5::4\n", "::", true),
            Err(Error::RatingOutOfScale { .. })
        ));
        assert!(matches!(
            parse_movielens_str("1::2::4.25::4\n", "::", true),
            Err(Error::RatingOutOfScale { .. })
        ));
    }

    #[test]
    fn empty_file() {
        assert!(matches!(parse_movielens_str("\n\n", "::", false), Err(Error::Empty(_))));
    }

    #[test]
    fn duplicate_keeps_last() {
        let p = parse_movielens_str("1::2::3::10\n1::2::5::20\n", "::", false).unwrap();
        assert_eq!(p.triples.len(), 1);
        assert_eq!(p.triples[0].rating, 5);
        assert_eq!(p.duplicates, 1);
    }
}
