use std::fmt;

/// The single `key=value ...` line every subcommand prints on success.
#[derive(Debug, Default)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    pub fn new(command: &str) -> Self {
        Summary(vec![("command".into(), command.into())])
    }

    pub fn add(mut self, key: &str, value: impl fmt::Display) -> Self {
        // Values never contain spaces, so the line splits cleanly.
        let value = value.to_string().replace(char::is_whitespace, "_");
        self.0.push((key.into(), value));
        self
    }

    pub fn add_f64(self, key: &str, value: f64) -> Self {
        self.add(key, format!("{value:.6}"))
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
