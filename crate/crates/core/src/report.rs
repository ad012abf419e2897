//! JSON output with full-precision floats.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// Version of the JSON envelope written by [`write_envelope`].
pub const SCHEMA_VERSION: u32 = 1;

/// Writes every float as `{:.16e}` so values round-trip bit for bit.
/// Non-finite floats become `null`.
#[derive(Debug, Default)]
pub struct ExactFloatFormatter {
    pretty: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.pretty.$name(w $(, $arg)*)
            }
        )*
    };
}

impl Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

pub fn to_writer<W: Write, T: Serialize + ?Sized>(w: W, value: &T) -> serde_json::Result<()> {
    let mut ser = Serializer::with_formatter(w, ExactFloatFormatter::default());
    value.serialize(&mut ser)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    to_writer(&mut buf, value)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a C,
    pub report: &'a R,
    pub timing_ms: f64,
}

pub fn write_envelope<W: Write, C: Serialize, R: Serialize>(
    mut w: W,
    command: &str,
    config: &C,
    report: &R,
    timing_ms: f64,
) -> serde_json::Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config,
        report,
        timing_ms,
    };
    to_writer(&mut w, &env)?;
    w.write_all(b"\n").map_err(serde_json::Error::io)
}
