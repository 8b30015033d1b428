# Make tests directory a proper package 