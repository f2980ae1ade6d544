//! Command line front end and sanitizing HTTP gateway.

pub mod commands;
pub mod gateway;
