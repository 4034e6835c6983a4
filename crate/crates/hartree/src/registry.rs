//! Name-keyed registries of algorithm variants.
//!
//! Each family of interchangeable algorithms (kernel assembly, element
//! layout, eigenpair route) is a trait; concrete variants are boxed behind it
//! and looked up by the name used in configuration files.

use crate::error::{Error, Result};

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: Vec<(String, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Registry { family, entries: Vec::new() }
    }

    pub fn register(&mut self, name: &str, item: Box<T>) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("{} `{}` registered twice", self.family, name)));
        }
        self.entries.push((name.to_string(), item));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, item)| item.as_ref())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown {} `{}` (available: {})",
                    self.family,
                    name,
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }
    struct Plain;
    impl Greeter for Plain {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn lookup_and_duplicates() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("plain", Box::new(Plain)).unwrap();
        assert_eq!(reg.get("plain").unwrap().greet(), "hi");
        assert!(reg.register("plain", Box::new(Plain)).is_err());
        let err = reg.get("fancy").err().unwrap().to_string();
        assert!(err.contains("plain"));
    }
}
