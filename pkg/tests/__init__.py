"""Tests for rocketmintime."""
