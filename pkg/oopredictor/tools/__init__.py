# Output storage and report writers
