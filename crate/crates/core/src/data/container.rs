//! HNO1 binary container: little-endian, self-describing named arrays plus a
//! `key = value` metadata blob.
//!
//! ```text
//! "HNO1" | version u32 | count u32 | records...
//! record: name_len u16 | name | dtype u8 | rank u8 | extents u64 x rank | payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HNO1";
pub const VERSION: u32 = 1;
pub const META_RECORD: &str = "meta";

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Text(String),
}

impl Payload {
    fn code(&self) -> u8 {
        match self {
            Payload::F32(_) => 1,
            Payload::F64(_) => 2,
            Payload::Text(_) => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl Record {
    pub fn f64(name: impl Into<String>, t: &Tensor) -> Self {
        Record {
            name: name.into(),
            shape: t.shape().to_vec(),
            payload: Payload::F64(t.data().to_vec()),
        }
    }

    pub fn f32(name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Self {
        Record {
            name: name.into(),
            shape: shape.to_vec(),
            payload: Payload::F32(data),
        }
    }

    pub fn text(name: impl Into<String>, s: impl Into<String>) -> Self {
        let s = s.into();
        Record {
            name: name.into(),
            shape: vec![s.len()],
            payload: Payload::Text(s),
        }
    }

    /// f32 payloads are widened.
    pub fn tensor(&self) -> Result<Tensor> {
        match &self.payload {
            Payload::F64(v) => Tensor::new(&self.shape, v.clone()),
            Payload::F32(v) => Tensor::new(&self.shape, v.iter().map(|&x| x as f64).collect()),
            Payload::Text(_) => Err(Error::CorruptRecord(format!(
                "`{}` is text, not an array",
                self.name
            ))),
        }
    }
}

/// Ordered `key = value` lines; keys are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let (key, value) = (key.into(), value.to_string());
        assert!(
            !key.contains('=') && !key.contains('\n') && !value.contains('\n'),
            "metadata entries are single `key = value` lines"
        );
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Metadata(format!("missing key `{key}`")))
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.require(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| Error::Metadata(format!("bad list entry `{x}` for `{key}`")))
            })
            .collect()
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| Error::Metadata(format!("bad value `{v}` for `{key}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest, v)))
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut m = Metadata::new();
        for (n, line) in s.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Metadata(format!("line {}: no `=`", n + 1)))?;
            m.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(m)
    }
}

pub fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub records: Vec<Record>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: Record) -> Result<()> {
        if self.records.iter().any(|x| x.name == r.name) {
            return Err(Error::CorruptRecord(format!(
                "duplicate record `{}`",
                r.name
            )));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::MissingRecord(name.to_string()))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        self.get(name)?.tensor()
    }

    pub fn metadata(&self) -> Result<Metadata> {
        match &self.get(META_RECORD)?.payload {
            Payload::Text(s) => Metadata::from_text(s),
            _ => Err(Error::CorruptRecord("`meta` is not text".into())),
        }
    }

    pub fn set_metadata(&mut self, m: &Metadata) {
        self.records.retain(|r| r.name != META_RECORD);
        self.records.push(Record::text(META_RECORD, m.to_text()));
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            let name = r.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::CorruptRecord(format!("name too long: {}", r.name)))?;
            let expect = match &r.payload {
                Payload::F32(v) => v.len(),
                Payload::F64(v) => v.len(),
                Payload::Text(s) => s.len(),
            };
            if r.shape.iter().product::<usize>() != expect || r.shape.len() > u8::MAX as usize {
                return Err(Error::CorruptRecord(format!(
                    "`{}`: shape {:?} does not match payload",
                    r.name, r.shape
                )));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(r.payload.code());
            out.push(r.shape.len() as u8);
            for &e in &r.shape {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            match &r.payload {
                Payload::F32(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::F64(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::Text(s) => out.extend_from_slice(s.as_bytes()),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut c = Cursor { b, at: 0 };
        let magic: [u8; 4] = c.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = c.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = c.u32("record count")?;
        let mut out = Container::new();
        for i in 0..n {
            let what = format!("record {i}");
            let len = u16::from_le_bytes(c.take(2, &what)?.try_into().expect("2 bytes"));
            let name = std::str::from_utf8(c.take(len as usize, &what)?)
                .map_err(|_| Error::CorruptRecord(format!("{what}: name is not UTF-8")))?
                .to_string();
            let dtype = c.take(1, &name)?[0];
            let rank = c.take(1, &name)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let e = u64::from_le_bytes(c.take(8, &name)?.try_into().expect("8 bytes"));
                shape.push(usize::try_from(e).map_err(|_| c.corrupt(&name))?);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| c.corrupt(&name))?;
            let width = match dtype {
                1 => 4,
                2 => 8,
                3 => 1,
                d => return Err(Error::CorruptRecord(format!("`{name}`: dtype code {d}"))),
            };
            let bytes = c.take(
                count.checked_mul(width).ok_or_else(|| c.corrupt(&name))?,
                &name,
            )?;
            let payload =
                match dtype {
                    1 => Payload::F32(
                        bytes
                            .chunks_exact(4)
                            .map(|x| f32::from_le_bytes(x.try_into().expect("4 bytes")))
                            .collect(),
                    ),
                    2 => Payload::F64(
                        bytes
                            .chunks_exact(8)
                            .map(|x| f64::from_le_bytes(x.try_into().expect("8 bytes")))
                            .collect(),
                    ),
                    _ => Payload::Text(String::from_utf8(bytes.to_vec()).map_err(|_| {
                        Error::CorruptRecord(format!("`{name}`: text is not UTF-8"))
                    })?),
                };
            out.push(Record {
                name,
                shape,
                payload,
            })?;
        }
        if c.at != b.len() {
            return Err(Error::CorruptRecord(format!(
                "{} trailing bytes",
                b.len() - c.at
            )));
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn corrupt(&self, what: &str) -> Error {
        Error::CorruptRecord(format!("{what}: truncated at byte {}", self.at))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.b.len() - self.at < n {
            return Err(self.corrupt(what));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}
