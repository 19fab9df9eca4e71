#!/usr/bin/env python
"""Runs knockoffforge subcommands (fit-joint, sample, ...) and any other Django management command."""
import sys

from knockoffforge.cli import main

if __name__ == '__main__':
    main(sys.argv[1:])
