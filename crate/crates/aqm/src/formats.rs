//! Line-oriented text formats shared between runs.
//!
//! * World: one image per line, `image_id` followed by 16 digits of four
//!   value names each (color bgcolor number style), space separated.
//! * Pool: one question per line, `id<TAB>property<TAB>value<TAB>provenance`.
//! * Confusion model: a `aqm-confusion <version>` header, `epsilon`,
//!   `epsilon_prime` and `questions` lines, then per question a
//!   `question <id> <property> <value>` line and 17 rows of 17 counts.
//!   Floats are written in shortest round-trip form, so reloading is exact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use aqm_core::likelihood::{ConfusionModel, ConfusionTable};
use aqm_core::mnist::{CountQuestion, Digit, DigitImage, Property, COUNT_ALPHABET, DIGITS_PER_IMAGE};
use aqm_core::pool::{Provenance, QuestionPool};
use aqm_core::Question;

pub const WORLD_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "aqm-confusion";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    InFile { path: PathBuf, source: Box<FormatError> },
}

impl FormatError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse { line, message: message.into() }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    fn in_file(self, path: &Path) -> Self {
        match self {
            e @ FormatError::Io { .. } => e,
            e => FormatError::InFile { path: path.to_path_buf(), source: Box::new(e) },
        }
    }

    /// True for failures of the underlying file system.
    pub fn is_io(&self) -> bool {
        match self {
            FormatError::Io { .. } => true,
            FormatError::InFile { source, .. } => source.is_io(),
            FormatError::Parse { .. } => false,
        }
    }
}

fn plain_io(e: io::Error) -> FormatError {
    FormatError::Io { path: PathBuf::from("<stream>"), source: e }
}

pub fn write_world<W: Write>(images: &[DigitImage], mut out: W) -> io::Result<()> {
    for img in images {
        write!(out, "{}", img.id)?;
        for d in &img.digits {
            for p in Property::ALL {
                write!(out, " {}", p.value_name(d.get(p)).expect("valid digit"))?;
            }
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn read_world<R: Read>(input: R) -> Result<Vec<DigitImage>, FormatError> {
    let mut images = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(plain_io)?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let id: u32 = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(|e| FormatError::parse(n, format!("image id: {e}")))?;
        let rest: Vec<&str> = tokens.collect();
        if rest.len() != DIGITS_PER_IMAGE * 4 {
            return Err(FormatError::parse(n, format!("expected 64 property values, found {}", rest.len())));
        }
        let mut digits = [Digit::default(); DIGITS_PER_IMAGE];
        for (d, chunk) in digits.iter_mut().zip(rest.chunks(4)) {
            for (p, name) in Property::ALL.into_iter().zip(chunk) {
                d.0[p.index()] = p
                    .parse_value(name)
                    .ok_or_else(|| FormatError::parse(n, format!("`{name}` is not a {p} value")))?;
            }
        }
        images.push(DigitImage { id, digits });
    }
    let mut ids: Vec<u32> = images.iter().map(|i| i.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(FormatError::parse(0, format!("duplicate image id {}", w[0])));
    }
    Ok(images)
}

pub fn write_pool<W: Write>(pool: &QuestionPool<CountQuestion>, mut out: W) -> io::Result<()> {
    for q in pool.questions() {
        writeln!(out, "{}\t{}\t{}\t{}", q.id, q.payload.property, q.payload.value_name(), pool.provenance())?;
    }
    out.flush()
}

fn parse_question(n: usize, property: &str, value: &str) -> Result<CountQuestion, FormatError> {
    let p = Property::parse(property).ok_or_else(|| FormatError::parse(n, format!("unknown property `{property}`")))?;
    let v = p
        .parse_value(value)
        .ok_or_else(|| FormatError::parse(n, format!("`{value}` is not a {p} value")))?;
    Ok(CountQuestion { property: p, value: v })
}

pub fn read_pool<R: Read>(input: R) -> Result<QuestionPool<CountQuestion>, FormatError> {
    let mut questions = Vec::new();
    let mut provenance: Option<String> = None;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(plain_io)?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, property, value, tag] = fields[..] else {
            return Err(FormatError::parse(n, "expected 4 tab-separated fields"));
        };
        let id: usize = id.parse().map_err(|e| FormatError::parse(n, format!("question id: {e}")))?;
        questions.push(Question::new(id, parse_question(n, property, value)?));
        match &provenance {
            None => provenance = Some(tag.to_string()),
            Some(t) if t != tag => return Err(FormatError::parse(n, "mixed provenance tags")),
            _ => {}
        }
    }
    let len = questions.len();
    let provenance = match provenance.as_deref() {
        Some("full") => Provenance::Full,
        Some("randQ") => Provenance::RandQ,
        Some("countQ") => Provenance::CountQ { requested: len, accepted: len },
        Some(other) => return Err(FormatError::parse(1, format!("unknown provenance `{other}`"))),
        None => return Err(FormatError::parse(0, "pool file is empty")),
    };
    QuestionPool::new(questions, provenance, 0).map_err(|e| FormatError::parse(0, e.to_string()))
}

pub fn write_model<W: Write>(model: &ConfusionModel, mut out: W) -> io::Result<()> {
    writeln!(out, "{MODEL_MAGIC} {MODEL_FORMAT_VERSION}")?;
    writeln!(out, "epsilon {}", model.epsilon())?;
    writeln!(out, "epsilon_prime {}", model.epsilon_prime())?;
    writeln!(out, "questions {}", model.tables().len())?;
    for t in model.tables() {
        let q = &t.question;
        writeln!(out, "question {} {} {}", q.id, q.payload.property, q.payload.value_name())?;
        for row in &t.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(out, "{}", cells.join(" "))?;
        }
    }
    out.flush()
}

pub fn read_model<R: Read>(input: R) -> Result<ConfusionModel, FormatError> {
    let mut lines = BufReader::new(input).lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String), FormatError> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(plain_io(e)),
            None => Err(FormatError::parse(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let keyed = |(n, line): (usize, String), key: &str| -> Result<(usize, String), FormatError> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(|r| (n, r.trim().to_string()))
            .ok_or_else(|| FormatError::parse(n, format!("expected `{key} ...`")))
    };
    let (n, version) = keyed(next("header")?, MODEL_MAGIC)?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(FormatError::parse(n, format!("unsupported model version {version}")));
    }
    let float = |(n, v): (usize, String)| v.parse::<f64>().map_err(|e| FormatError::parse(n, e.to_string()));
    let epsilon = float(keyed(next("epsilon")?, "epsilon")?)?;
    let epsilon_prime = float(keyed(next("epsilon_prime")?, "epsilon_prime")?)?;
    let (n, count) = keyed(next("questions")?, "questions")?;
    let count: usize = count.parse().map_err(|e| FormatError::parse(n, format!("{e}")))?;
    let mut tables = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, head) = keyed(next("question")?, "question")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let [id, property, value] = parts[..] else {
            return Err(FormatError::parse(n, "expected `question <id> <property> <value>`"));
        };
        let id: usize = id.parse().map_err(|e| FormatError::parse(n, format!("{e}")))?;
        let mut table = ConfusionTable::empty(Question::new(id, parse_question(n, property, value)?));
        for row in table.counts.iter_mut() {
            let (n, line) = next("count row")?;
            let cells: Vec<u64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| FormatError::parse(n, format!("count: {e}")))?;
            if cells.len() != COUNT_ALPHABET {
                return Err(FormatError::parse(n, format!("expected {COUNT_ALPHABET} counts")));
            }
            row.copy_from_slice(&cells);
        }
        tables.push(table);
    }
    ConfusionModel::from_tables(tables, epsilon, epsilon_prime).map_err(|e| FormatError::parse(0, e.to_string()))
}

/// Opens `path` for reading and parses it with `read`.
pub fn load<T>(path: &Path, read: impl FnOnce(File) -> Result<T, FormatError>) -> Result<T, FormatError> {
    let f = File::open(path).map_err(|e| FormatError::io(path, e))?;
    read(f).map_err(|e| e.in_file(path))
}

/// Creates `path` (refusing to replace an existing file unless `force`) and
/// writes it with `write`.
pub fn save(path: &Path, force: bool, write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), FormatError> {
    let file = if force {
        File::create(path)
    } else {
        File::options().write(true).create_new(true).open(path)
    }
    .map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|()| w.flush()).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use aqm_core::likelihood::train_confusion;
    use aqm_core::mnist::{count_questions, generate_world, NoisyAnswerer};
    use aqm_core::pool::{full_pool, rand_q};
    use aqm_core::seed;

    #[test]
    fn world_round_trip_and_validation() {
        let world = generate_world(25, 3);
        let mut buf = Vec::new();
        write_world(&world, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 25);
        assert_eq!(text.lines().next().unwrap().split(' ').count(), 65);
        assert_eq!(read_world(&buf[..]).unwrap(), world);

        let bad = text.replacen("red", "magenta", 1);
        if bad != text {
            assert!(matches!(read_world(bad.as_bytes()), Err(FormatError::Parse { .. })));
        }
        assert!(read_world("0 red cyan 1 flat\n".as_bytes()).is_err());
        let dup = format!("{}{}", text.lines().next().unwrap(), "\n").repeat(2);
        assert!(read_world(dup.as_bytes()).is_err());
    }

    #[test]
    fn pool_round_trip() {
        let full = full_pool(count_questions()).unwrap();
        let sampled = rand_q(full.questions(), 7, 11).unwrap();
        for pool in [full, sampled] {
            let mut buf = Vec::new();
            write_pool(&pool, &mut buf).unwrap();
            let back = read_pool(&buf[..]).unwrap();
            assert_eq!(back.questions(), pool.questions());
            assert_eq!(back.provenance(), pool.provenance());
        }
        assert!(read_pool("0\tcolor\tred\n".as_bytes()).is_err());
        assert!(read_pool("".as_bytes()).is_err());
    }

    #[test]
    fn model_round_trip_is_exact() {
        let images = generate_world(200, 8);
        let pool = full_pool(count_questions()).unwrap();
        let ans = NoisyAnswerer::new(0.9, 1).unwrap();
        let mut rng = seed::stream(2, &[]);
        let model =
            train_confusion(&images, pool.questions(), 0.1 + 0.2, |img, q| ans.answer(img, &q.payload, &mut rng)).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.epsilon().to_bits(), model.epsilon().to_bits());
        let mut again = Vec::new();
        write_model(&back, &mut again).unwrap();
        assert_eq!(again, buf);

        let text = String::from_utf8(buf).unwrap();
        assert!(read_model(text.replace("aqm-confusion 1", "aqm-confusion 9").as_bytes()).is_err());
        assert!(read_model(text.replacen("epsilon_prime", "epsilon_primo", 1).as_bytes()).is_err());
        let truncated: String = text.lines().take(30).map(|l| format!("{l}\n")).collect();
        assert!(read_model(truncated.as_bytes()).is_err());
    }

    #[test]
    fn save_refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.world");
        save(&path, false, |w| write_world(&generate_world(2, 1), w)).unwrap();
        let err = save(&path, false, |w| write_world(&generate_world(2, 1), w)).unwrap_err();
        assert!(err.is_io());
        save(&path, true, |w| write_world(&generate_world(3, 1), w)).unwrap();
        assert_eq!(load(&path, read_world).unwrap().len(), 3);
        assert!(load(&dir.path().join("missing"), read_world).unwrap_err().is_io());
    }
}
