//! Minimal stderr logger gated by the `WITNESSNET_LOG` environment
//! variable (error, warn, info, debug, trace). Logging never touches
//! report bytes: everything goes to stderr.

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

static LEVEL: OnceLock<Level> = OnceLock::new();

pub fn level() -> Level {
    *LEVEL.get_or_init(|| match std::env::var("WITNESSNET_LOG").as_deref() {
        Ok("error") => Level::Error,
        Ok("warn") => Level::Warn,
        Ok("info") => Level::Info,
        Ok("debug") => Level::Debug,
        Ok("trace") => Level::Trace,
        _ => Level::Off,
    })
}

pub fn log(at: Level, args: std::fmt::Arguments<'_>) {
    if at <= level() && at != Level::Off {
        eprintln!("[{}] {}", label(at), args);
    }
}

fn label(l: Level) -> &'static str {
    match l {
        Level::Off => "off",
        Level::Error => "error",
        Level::Warn => "warn",
        Level::Info => "info",
        Level::Debug => "debug",
        Level::Trace => "trace",
    }
}

macro_rules! info {
    ($($arg:tt)*) => {
        $crate::harness::log::log($crate::harness::log::Level::Info, format_args!($($arg)*))
    };
}

macro_rules! debug {
    ($($arg:tt)*) => {
        $crate::harness::log::log($crate::harness::log::Level::Debug, format_args!($($arg)*))
    };
}

pub(crate) use debug;
pub(crate) use info;
