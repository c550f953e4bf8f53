use std::sync::Arc;

use anyhow::{Context, Result};
use weaver_core::lm::openai::{CompletionStyle, OpenAiConfig, OpenAiEmbedder, OpenAiGenerator, OpenAiScorer};
use weaver_core::lm::{DiskCache, GatewayConfig, GenerationParams, MemoryCache, ResponseCache};
use weaver_core::{ExpansionConfig, Recommender, RecommenderConfig};
use weaver_service::{Providers, SessionConfig, SessionOverrides};

use crate::args::{CompletionApi, EngineArgs, ProviderArgs};

pub fn build(args: &ProviderArgs) -> Result<Providers> {
    if args.mock {
        return Ok(Providers::mock());
    }
    let cache: Arc<dyn ResponseCache> = match &args.cache_dir {
        Some(dir) => Arc::new(
            DiskCache::open(dir).with_context(|| format!("opening response cache {}", dir.display()))?,
        ),
        None => Arc::new(MemoryCache::new()),
    };
    let config = OpenAiConfig::from_env(&args.base_url);
    let generator = match args.completion_api {
        CompletionApi::Chat => OpenAiGenerator::chat(config.clone()),
        CompletionApi::Completions => OpenAiGenerator::new(config.clone(), "/v1/completions", CompletionStyle::Completions),
    };
    let embedder = OpenAiEmbedder::new(config.clone(), &args.embedding_model);
    let scorer = OpenAiScorer::connect(config, &args.scoring_model)
        .with_context(|| format!("scoring model {} cannot provide perplexities", args.scoring_model))?;
    let params = GenerationParams {
        model: args.model.clone(),
        ..GenerationParams::default()
    };
    let gateway = GatewayConfig {
        parallelism: args.parallelism as usize,
        ..GatewayConfig::default()
    };
    Ok(Providers::with_gateways(
        Arc::new(generator),
        Arc::new(embedder),
        Arc::new(scorer),
        params,
        cache,
        gateway,
    ))
}

impl EngineArgs {
    pub fn overrides(&self) -> SessionOverrides {
        SessionOverrides {
            n_per_relation: self.n,
            max_kb_size: self.max_kb_size,
            initial_layers: self.layers,
            relations_layer1: self.relations_layer1.clone(),
            relations_layer2: self.relations_layer2.clone(),
            k: self.k,
            alpha: self.alpha,
            k_growth: self.k_growth,
            suggestions: None,
        }
    }

    pub fn configs(&self) -> Result<(ExpansionConfig, SessionConfig)> {
        let mut expansion = ExpansionConfig::default();
        let mut session = SessionConfig::default();
        self.overrides().apply(&mut expansion, &mut session);
        expansion.validate()?;
        session.recommender.validate()?;
        Ok((expansion, session))
    }

    pub fn recommender_config(&self) -> Result<RecommenderConfig> {
        Ok(self.configs()?.1.recommender)
    }
}

pub fn recommender(providers: &Providers, config: RecommenderConfig) -> Result<Recommender> {
    Ok(Recommender::new(config, providers.embed.clone(), providers.score.clone())?)
}
