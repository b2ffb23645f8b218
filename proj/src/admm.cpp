namespace admpc {}
