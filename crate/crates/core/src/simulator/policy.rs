use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QuoteSurface;

/// What the trader does over the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Rest an ask at this premium over the reference price.
    Limit(f64),
    /// Sell one unit immediately at the reference price.
    Market,
}

/// A quoting rule depending only on time and inventory.
pub trait QuotePolicy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Action at time `t` holding `q >= 1` units.
    fn action(&self, t: f64, q: usize) -> Action;

    /// Largest inventory the policy can quote for, if bounded.
    fn max_inventory(&self) -> Option<usize> {
        None
    }
}

impl fmt::Debug for dyn QuotePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuotePolicy({})", self.name())
    }
}

/// Quotes from the optimal surface, looked up at the latest grid time `<= t`.
#[derive(Debug, Clone)]
pub struct OptimalSurface {
    surface: QuoteSurface,
}

impl OptimalSurface {
    pub fn new(surface: QuoteSurface) -> Self {
        Self { surface }
    }
}

impl QuotePolicy for OptimalSurface {
    fn name(&self) -> &'static str {
        "optimal"
    }

    fn action(&self, t: f64, q: usize) -> Action {
        Action::Limit(self.surface.quote_at(t, q))
    }

    fn max_inventory(&self) -> Option<usize> {
        Some(self.surface.q_max())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedQuote {
    pub delta: f64,
}

impl QuotePolicy for FixedQuote {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn action(&self, _t: f64, _q: usize) -> Action {
        Action::Limit(self.delta)
    }
}

/// The optimal surface, except that a market order replaces any quote below
/// `threshold`. Market orders pay no spread or fees.
#[derive(Debug, Clone)]
pub struct MarketOrderFallback {
    surface: QuoteSurface,
    threshold: f64,
}

impl MarketOrderFallback {
    pub fn new(surface: QuoteSurface, threshold: f64) -> Self {
        Self { surface, threshold }
    }
}

impl QuotePolicy for MarketOrderFallback {
    fn name(&self) -> &'static str {
        "market_fallback"
    }

    fn action(&self, t: f64, q: usize) -> Action {
        let delta = self.surface.quote_at(t, q);
        if delta < self.threshold {
            Action::Market
        } else {
            Action::Limit(delta)
        }
    }

    fn max_inventory(&self) -> Option<usize> {
        Some(self.surface.q_max())
    }
}

/// Policy selection as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default = "PolicySpec::default_name")]
    pub name: String,
    /// Premium for `fixed`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Switch-to-market threshold for `market_fallback`, Tick.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl PolicySpec {
    fn default_name() -> String {
        "optimal".into()
    }

    pub fn optimal() -> Self {
        Self {
            name: Self::default_name(),
            delta: None,
            threshold: None,
        }
    }

    pub fn fixed(delta: f64) -> Self {
        Self {
            name: "fixed".into(),
            delta: Some(delta),
            threshold: None,
        }
    }
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::optimal()
    }
}

type Factory = Box<dyn Fn(&PolicySpec, &dyn Fn() -> Result<QuoteSurface>) -> Result<Arc<dyn QuotePolicy>> + Send + Sync>;

/// Policy constructors keyed by name. Factories receive the spec and a
/// callback producing the optimal surface, which is only solved for when a
/// policy asks for it.
pub struct PolicyRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `optimal`, `fixed` and `market_fallback` (threshold defaults to 0).
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("optimal", |_, surface| Ok(Arc::new(OptimalSurface::new(surface()?))));
        r.register("fixed", |spec, _| {
            let delta = spec
                .delta
                .ok_or_else(|| Error::Config("policy `fixed` needs `delta`".into()))?;
            if !delta.is_finite() {
                return Err(Error::Config(format!("fixed delta {delta} is not finite")));
            }
            Ok(Arc::new(FixedQuote { delta }))
        });
        r.register("market_fallback", |spec, surface| {
            Ok(Arc::new(MarketOrderFallback::new(
                surface()?,
                spec.threshold.unwrap_or(0.0),
            )))
        });
        r
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F)
    where
        F: Fn(&PolicySpec, &dyn Fn() -> Result<QuoteSurface>) -> Result<Arc<dyn QuotePolicy>>
            + Send
            + Sync
            + 'static,
    {
        self.factories.insert(name, Box::new(factory));
    }

    pub fn build(
        &self,
        spec: &PolicySpec,
        surface: &dyn Fn() -> Result<QuoteSurface>,
    ) -> Result<Arc<dyn QuotePolicy>> {
        let factory = self
            .factories
            .get(spec.name.as_str())
            .ok_or_else(|| Error::UnknownName {
                kind: "policy",
                name: spec.name.clone(),
            })?;
        factory(spec, surface)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
