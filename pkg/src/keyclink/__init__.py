"""Recover Diceware passphrases from keyboard audio."""
