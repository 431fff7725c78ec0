# Generated inputs for corpus experiments
