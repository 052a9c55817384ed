# MoE toolkit project package
