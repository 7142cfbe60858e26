"""Configuration, schedules, statistics and the experiment drivers."""
