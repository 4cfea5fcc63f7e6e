//! Conversational text-to-SQL agents for ERP databases.

pub mod agent;
pub mod config;
pub mod db;
pub mod eval;
pub mod events;
pub mod extract;
pub mod fixture;
pub mod llm;
pub mod orchestrator;
pub mod prompts;
pub mod sandbox;
pub mod schema;
pub mod service;
