//! Exit status contract: 1 for usage, configuration and unreadable input
//! files; 2 for bad data and numerical failures.

use zeroshot::Error;

/// A flag combination or value the parser could not reject on its own.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } | Error::Config(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(exit_code(&anyhow::Error::new(Usage("x".into()))), 1);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Config("x".into()))), 1);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Empty).context("loading")), 2);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Singular { rank: 1, cols: 2 })), 2);
    }
}
