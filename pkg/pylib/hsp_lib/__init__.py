"""Hybrid storage placement simulator and its online learning agent."""
