# Keeps the repository root on sys.path so tests can import helpers from
# sibling test modules (tests.test_dataio etc.) regardless of the cwd.
